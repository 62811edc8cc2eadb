"""CART trees stored as flat node arrays.

Two growers share one split search: classification trees scored by Gini
impurity decrease, and regression trees (used by boosting) scored by
squared-error decrease. Candidate thresholds are midpoints between
consecutive distinct feature values. Ties go to the lowest feature index,
then the lowest threshold. A sample goes left when ``x[feature] <= threshold``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        feature, threshold = self.feature, self.threshold
        while feature[node] != LEAF:
            if x[feature[node]] <= threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return float(self.value[node])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(X)])

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls(
            np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]),
            np.array([float(value)]),
        )


def _threshold(a: float, b: float) -> float:
    mid = (a + b) / 2.0
    # adjacent doubles can round the midpoint onto b; fall back to a so the
    # partition seen at training time is the one used at prediction time
    return mid if a <= mid < b else a


def best_split(
    X: np.ndarray,
    target: np.ndarray,
    features,
    min_leaf: int,
    criterion: str,
):
    """Return ``(score, feature, threshold)`` of the best split or ``None``.

    ``score`` is only comparable within one node. For ``"gini"`` it is
    ``sum_children sum_classes n_ck**2 / n_c`` (maximising it maximises the
    Gini decrease); for ``"mse"`` it is ``sum_children S_c**2 / n_c`` over the
    target sums ``S_c``.
    """
    n = X.shape[0]
    best = None
    if n < 2 * min_leaf:
        return None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ts = target[order]
        pos = np.arange(1, n)
        ok = (xs[1:] > xs[:-1]) & (pos >= min_leaf) & (n - pos >= min_leaf)
        if not ok.any():
            continue
        pos = pos[ok]
        nl = pos.astype(float)
        nr = n - nl
        csum = np.cumsum(ts)
        if criterion == "gini":
            l1 = csum[pos - 1]
            r1 = csum[-1] - l1
            l0, r0 = nl - l1, nr - r1
            scores = ((l0 * l0 + l1 * l1) * nr + (r0 * r0 + r1 * r1) * nl) / (nl * nr)
        else:
            sl = csum[pos - 1]
            sr = csum[-1] - sl
            scores = sl * sl / nl + sr * sr / nr
        k = int(np.argmax(scores))
        if best is None or scores[k] > best[0]:
            p = pos[k]
            best = (float(scores[k]), int(f), _threshold(float(xs[p - 1]), float(xs[p])))
    return best


def grow(
    X: np.ndarray,
    target: np.ndarray,
    *,
    max_depth: int,
    min_leaf: int,
    criterion: str,
    leaf_value: Callable[[np.ndarray], float],
    is_pure: Callable[[np.ndarray], bool],
    feature_sampler: Callable[[], np.ndarray] | None = None,
) -> Tree:
    """Depth-first growth over row-index sets; nodes numbered in pre-order."""
    d = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def add(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(leaf_value(idx))
        if depth >= max_depth or is_pure(idx):
            return node
        feats = feature_sampler() if feature_sampler is not None else range(d)
        split = best_split(X[idx], target[idx], feats, min_leaf, criterion)
        if split is None:
            return node
        _, f, thr = split
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = add(idx[go_left], depth + 1)
        right[node] = add(idx[~go_left], depth + 1)
        return node

    add(np.arange(X.shape[0]), 0)
    return Tree(
        np.array(feature, dtype=int),
        np.array(threshold, dtype=float),
        np.array(left, dtype=int),
        np.array(right, dtype=int),
        np.array(value, dtype=float),
    )


def grow_classifier(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_leaf: int,
    feature_sampler: Callable[[], np.ndarray] | None = None,
) -> Tree:
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot grow a tree on an empty training set")
    return grow(
        np.asarray(X, dtype=float),
        y,
        max_depth=max_depth,
        min_leaf=min_leaf,
        criterion="gini",
        leaf_value=lambda idx: float(y[idx].mean()),
        is_pure=lambda idx: bool(np.all(y[idx] == y[idx][0])),
        feature_sampler=feature_sampler,
    )
