from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_percentages(self) -> dict[str, float]:
        return {
            "accuracy": 100.0 * self.accuracy,
            "precision": 100.0 * self.precision,
            "recall": 100.0 * self.recall,
            "f1": 100.0 * self.f1,
        }


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    """Derived scores with the conventions: empty precision/recall
    denominators give 1.0, and F1 is 0 when precision + recall is 0."""
    total = tp + fp + tn + fn
    if total <= 0:
        raise ValueError("empty confusion matrix")
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp, fp, tn, fn, (tp + tn) / total, precision, recall, f1)


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return tp, fp, tn, fn


def metrics_from_labels(y_true, y_pred) -> Metrics:
    return metrics_from_counts(*confusion(y_true, y_pred))


TABLE_COLUMNS = ("Accuracy (%)", "Precision (%)", "Recall (%)", "F1 Score (%)")


def format_table(rows: dict[str, Metrics]) -> str:
    """Aligned text table, one row per model, percentages to two decimals."""
    name_w = max([len("Detection Model")] + [len(k) for k in rows])
    widths = [len(c) for c in TABLE_COLUMNS]
    head = "Detection Model".ljust(name_w) + "  " + "  ".join(
        c.rjust(w) for c, w in zip(TABLE_COLUMNS, widths)
    )
    lines = [head, "-" * len(head)]
    for name, m in rows.items():
        pct = m.as_percentages()
        cells = [f"{pct[k]:.2f}" for k in ("accuracy", "precision", "recall", "f1")]
        lines.append(name.ljust(name_w) + "  " + "  ".join(
            c.rjust(w) for c, w in zip(cells, widths)
        ))
    return "\n".join(lines) + "\n"


def format_csv(rows: dict[str, Metrics]) -> str:
    lines = ["model,accuracy_pct,precision_pct,recall_pct,f1_pct,tp,fp,tn,fn"]
    for name, m in rows.items():
        pct = m.as_percentages()
        lines.append(
            f"{name},{pct['accuracy']:.2f},{pct['precision']:.2f},{pct['recall']:.2f},"
            f"{pct['f1']:.2f},{m.tp},{m.fp},{m.tn},{m.fn}"
        )
    return "\n".join(lines) + "\n"
