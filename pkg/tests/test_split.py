import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpu_sentinel.classifiers import split, stratified_split

from .helpers import make_dataset


def test_ten_rows():
    ds = make_dataset(np.arange(10.0), [0] * 5 + [1] * 5)
    train, test = split(ds, 0.3, seed=42)
    assert (len(train), len(test)) == (7, 3)
    assert set(train.y) == {0, 1} and set(test.y) == {0, 1}


def test_reference_shuffle():
    # largest remainder gives class 0 two test rows and class 1 one
    y = np.array([0] * 5 + [1] * 5)
    tr, te = stratified_split(y, 0.3, 42)
    rng = np.random.default_rng(42)
    p0 = rng.permutation(np.flatnonzero(y == 0))
    p1 = rng.permutation(np.flatnonzero(y == 1))
    assert te.tolist() == sorted(p0[:2].tolist() + p1[:1].tolist())
    assert tr.tolist() == sorted(p0[2:].tolist() + p1[1:].tolist())


def test_deterministic():
    y = np.array([0, 1] * 20)
    a, b = stratified_split(y, 0.25, 3), stratified_split(y, 0.25, 3)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_single_class():
    with pytest.raises(ValueError, match="class 1 has 0 row"):
        stratified_split(np.zeros(10, int), 0.3, 1)


def test_bad_fraction():
    with pytest.raises(ValueError):
        stratified_split(np.array([0, 0, 1, 1]), 1.0, 1)


@given(st.integers(2, 60), st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_disjoint_and_proportional(n0, n1, frac, seed):
    y = np.array([0] * n0 + [1] * n1)
    rng = np.random.default_rng(seed)
    y = y[rng.permutation(len(y))]
    tr, te = stratified_split(y, frac, seed)
    assert set(tr).isdisjoint(te) and len(tr) + len(te) == len(y)
    for c, n in ((0, n0), (1, n1)):
        k = int((y[te] == c).sum())
        assert 1 <= k <= n - 1
        assert abs(k - frac * n) <= 1 + 1e-9 or k in (1, n - 1)
