from __future__ import annotations

import math

import numpy as np

from ..features import Dataset


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(y, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Return sorted (train_idx, test_idx).

    The test size is ``round(test_fraction * n)``, shared out across classes
    by largest remainder (lower label first on ties). Every class keeps at
    least one row on each side, which can move the total by a row.
    """
    y = np.asarray(y, dtype=int)
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    classes, counts = np.unique(y, return_counts=True)
    for c in (0, 1):
        n_c = int(counts[classes == c][0]) if c in classes else 0
        if n_c < 2:
            raise ValueError(
                f"class {c} has {n_c} row(s); stratified split needs at least 2 per class"
            )
    n = len(y)
    n_test = _round_half_up(test_fraction * n)

    # each class's share is its own fraction; the leftover rows needed to reach
    # n_test go to the largest remainders, so every class is within one row
    ideal = test_fraction * counts
    alloc = np.floor(ideal).astype(int)
    order = sorted(range(len(classes)), key=lambda i: (-(ideal[i] - alloc[i]), classes[i]))
    for i in order[: max(n_test - int(alloc.sum()), 0)]:
        alloc[i] += 1
    alloc = np.clip(alloc, 1, counts - 1)

    rng = np.random.default_rng(seed)
    test = []
    for c, k in zip(classes, alloc):
        idx = rng.permutation(np.flatnonzero(y == c))
        test.extend(idx[:k].tolist())
    test_idx = np.array(sorted(test), dtype=int)
    train_idx = np.setdiff1d(np.arange(n), test_idx)
    return train_idx, test_idx


def split(dataset: Dataset, test_fraction: float = 0.3, seed: int = 42) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = stratified_split(dataset.y, test_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)
