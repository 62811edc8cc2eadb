from fractions import Fraction
from pathlib import Path

import numpy as np

from gpu_sentinel.features import Dataset, FeatureVector

FIXTURES = Path(__file__).parent / "fixtures"


def make_dataset(X, y=None, names=None) -> Dataset:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"f{i}" for i in range(X.shape[1]))
    labels = [None] * len(X) if y is None else [int(v) for v in y]
    rows = [FeatureVector(x.copy(), float(i), float(i + 1), lab) for i, (x, lab) in enumerate(zip(X, labels))]
    return Dataset(tuple(names), rows)


def _gini(counts) -> "Fraction":
    n = sum(counts)
    return 1 - sum(Fraction(c, n) ** 2 for c in counts)


def exhaustive_root_split(X, y, min_leaf=1):
    """Brute-force CART root split with exact rational Gini arithmetic.

    Every (feature, midpoint) pair is scored; the largest impurity decrease
    wins, ties going to the lowest feature index and then the lowest
    threshold. Returns ``None`` for a pure node or when no split leaves
    ``min_leaf`` rows on each side.
    """
    X = np.asarray(X, dtype=float)
    y = [int(v) for v in y]
    n = len(y)
    if len(set(y)) < 2:
        return None
    parent = _gini([y.count(0), y.count(1)])
    best = None
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for a, b in zip(values, values[1:]):
            thr = (a + b) / 2.0
            left = [lab for x, lab in zip(X[:, f], y) if x <= thr]
            right = [lab for x, lab in zip(X[:, f], y) if x > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            gain = parent - Fraction(len(left), n) * _gini([left.count(0), left.count(1)]) \
                - Fraction(len(right), n) * _gini([right.count(0), right.count(1)])
            if best is None or gain > best[0]:
                best = (gain, f, thr)
    return None if best is None else (best[1], best[2])


# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
