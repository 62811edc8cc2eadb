import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpu_sentinel.trace import (
    KernelRecord,
    TelemetrySample,
    Trace,
    TraceMeta,
    align_streams,
    validate_trace,
)


def sample(t, util=40.0, fps=None):
    return TelemetrySample(t, util, 2800.0, 65.0, 1850.0, 62.0, fps)


def kernel(t, dur=1800.0):
    return KernelRecord(t, "k", dur, 45.0, 15.0, 1850.0)


def make(samples, kernels=(), labels=None):
    return Trace(TraceMeta(), samples, kernels, labels if labels is not None else [0] * len(samples))


class TestValidate:
    def test_well_formed(self):
        assert validate_trace(make([sample(0), sample(1), sample(2)])) == []

    def test_util_out_of_range_names_index_and_field(self):
        problems = validate_trace(make([sample(0), sample(1, util=120), sample(2)]))
        assert len(problems) == 1
        assert "sample 1" in problems[0] and "gpu_util" in problems[0]

    def test_duplicate_time(self):
        problems = validate_trace(make([sample(0), sample(0)]))
        assert len(problems) == 1
        assert "strictly" in problems[0]

    def test_label_length_mismatch(self):
        problems = validate_trace(make([sample(0), sample(1)], labels=[0]))
        assert any("labels length" in p for p in problems)

    def test_non_binary_label(self):
        assert validate_trace(make([sample(0)], labels=[2]))

    def test_kernel_invariants(self):
        bad = [KernelRecord(0, "k", 0.0, 101.0, -1.0, 0.0)]
        assert len(validate_trace(make([sample(0)], bad))) == 4

    def test_kernels_out_of_order(self):
        assert len(validate_trace(make([sample(0), sample(1)], [kernel(0.6), kernel(0.5)]))) == 1

    def test_negative_fps_and_nan(self):
        s = TelemetrySample(0, 40, 2800, math.nan, 1850, 62, -1.0)
        problems = validate_trace(make([s]))
        assert any("fps" in p for p in problems)
        assert any("not finite" in p for p in problems)


class TestAlign:
    def test_rebase_example(self):
        tr = align_streams([sample(100), sample(101)], [kernel(100.4)])
        assert tr.times == [0.0, 1.0]
        assert [k.t for k in tr.kernels] == [0.4]
        assert tr.labels == (0, 0)

    def test_fps_nearest_within_half_interval(self):
        tr = align_streams([sample(100), sample(101)], fps_log=[(100.3, 27.0)], interval_s=1.0)
        assert [s.fps for s in tr.samples] == [27.0, None]
        tr = align_streams([sample(100), sample(101)], fps_log=[(100.6, 27.0)], interval_s=1.0)
        assert [s.fps for s in tr.samples] == [None, 27.0]

    def test_fps_oracle_on_fixture_grid(self):
        # brute-force nearest neighbour, closest reading per sample
        times = [100.0, 101.0, 102.0, 103.0]
        readings = [(99.8, 1.0), (100.45, 2.0), (100.6, 3.0), (101.95, 4.0), (102.2, 5.0), (103.7, 6.0)]
        tr = align_streams([sample(t) for t in times], fps_log=readings, interval_s=1.0)
        expected = {}
        for ts, v in readings:
            dists = [abs(ts - t) for t in times]
            j = min(range(len(times)), key=lambda i: dists[i])
            if dists[j] <= 0.5 and (j not in expected or dists[j] < expected[j][0]):
                expected[j] = (dists[j], v)
        assert [s.fps for s in tr.samples] == [expected[i][1] if i in expected else None for i in range(4)]

    def test_origin_is_earliest_stream(self):
        tr = align_streams([sample(100), sample(101)], [kernel(99.5)])
        assert tr.times == [0.5, 1.5]
        assert tr.kernels[0].t == 0.0

    def test_errors(self):
        with pytest.raises(ValueError, match="no samples"):
            align_streams([])
        with pytest.raises(ValueError, match="index 2"):
            align_streams([sample(0), sample(1), sample(1)])
        with pytest.raises(ValueError, match="kernels out of order at index 1"):
            align_streams([sample(0)], [kernel(1), kernel(0)])
        with pytest.raises(ValueError, match="2 samples, 1 labels"):
            align_streams([sample(0), sample(1)], labels=[0])

    def test_interval_inferred_from_median(self):
        tr = align_streams([sample(t) for t in (0, 2, 4, 7)])
        assert tr.meta.interval_s == 2


# -- properties -----------------------------------------------------------

gaps = st.lists(st.floats(0.05, 5.0), min_size=1, max_size=30)


@st.composite
def streams(draw):
    start = draw(st.floats(0, 1e6))
    ts = [start]
    for g in draw(gaps):
        ts.append(ts[-1] + g)
    samples = [
        TelemetrySample(t, draw(st.floats(0, 100)), 2800.0, draw(st.floats(0, 300)), 1800.0, 60.0)
        for t in ts
    ]
    ktimes = sorted(draw(st.lists(st.floats(start - 2, ts[-1] + 2), max_size=10)))
    kernels = [KernelRecord(t, "k", 10.0, 50.0, 20.0, 1800.0) for t in ktimes]
    ftimes = sorted(draw(st.lists(st.floats(start - 2, ts[-1] + 2), max_size=10)))
    fps = [(t, 28.0) for t in ftimes]
    return samples, kernels, fps


@given(streams())
def test_aligned_traces_are_valid(data):
    samples, kernels, fps = data
    tr = align_streams(samples, kernels, fps, interval_s=1.0)
    assert validate_trace(tr) == []


@given(streams(), st.integers(-10**5, 10**5))
def test_translation_invariance(data, shift):
    samples, kernels, fps = data
    base = align_streams(samples, kernels, fps, interval_s=1.0)
    moved = align_streams(
        [TelemetrySample(s.t + shift, s.gpu_util, s.mem_used, s.power, s.sm_clock, s.temperature)
         for s in samples],
        [KernelRecord(k.t + shift, k.kernel_name, k.duration_us, k.sm_throughput,
                      k.dram_throughput, k.sm_freq) for k in kernels],
        [(t + shift, v) for t, v in fps],
        interval_s=1.0,
    )
    assert moved == base


@given(streams())
def test_first_rebased_sample_at_zero_without_earlier_streams(data):
    samples, _, _ = data
    assert align_streams(samples, interval_s=1.0).samples[0].t == 0.0
