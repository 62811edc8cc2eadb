"""Canonical in-memory telemetry model and stream alignment.

A :class:`Trace` bundles device-sampler readings, kernel-profiler records and
per-sample ground-truth labels on a common time axis that starts at zero.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

BENIGN = 0
MINER = 1

NONNEG_SAMPLE_FIELDS = ("t", "mem_used", "power", "sm_clock")
# rebased times are rounded to whole microseconds so that rebasing is exact
# under a constant shift of every absolute timestamp
TIME_DECIMALS = 6


@dataclass(frozen=True)
class TelemetrySample:
    t: float
    gpu_util: float
    mem_used: float
    power: float
    sm_clock: float
    temperature: float
    fps: float | None = None


@dataclass(frozen=True)
class KernelRecord:
    t: float
    kernel_name: str
    duration_us: float
    sm_throughput: float
    dram_throughput: float
    sm_freq: float


@dataclass(frozen=True)
class TraceMeta:
    scenario_id: str = "trace"
    seed: int | None = None
    interval_s: float = 1.0
    description: str = ""
    onset_s: float | None = None
    rng: str = ""


@dataclass(frozen=True)
class Trace:
    meta: TraceMeta
    samples: tuple[TelemetrySample, ...]
    kernels: tuple[KernelRecord, ...] = ()
    labels: tuple[int, ...] = field(default=())

    def __post_init__(self):
        # accept lists from callers but keep the stored value hashable/immutable
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.samples]

    def with_labels(self, labels: Sequence[int]) -> "Trace":
        return replace(self, labels=tuple(labels))


def validate_trace(trace: Trace) -> list[str]:
    """Return one human-readable entry per violated invariant; empty means valid."""
    problems: list[str] = []
    samples = trace.samples
    if len(trace.labels) != len(samples):
        problems.append(
            f"labels length {len(trace.labels)} != samples length {len(samples)}"
        )
    for i, s in enumerate(samples):
        for name in ("t", "gpu_util", "mem_used", "power", "sm_clock", "temperature"):
            v = getattr(s, name)
            if not math.isfinite(v):
                problems.append(f"sample {i}: {name}={v} is not finite")
        if not 0.0 <= s.gpu_util <= 100.0:
            problems.append(f"sample {i}: gpu_util={s.gpu_util} outside [0, 100]")
        for name in NONNEG_SAMPLE_FIELDS:
            if getattr(s, name) < 0:
                problems.append(f"sample {i}: {name}={getattr(s, name)} is negative")
        if s.fps is not None and not s.fps >= 0:
            problems.append(f"sample {i}: fps={s.fps} is negative")
        if i and not samples[i - 1].t < s.t:
            problems.append(
                f"sample {i}: t={s.t} not strictly after previous t={samples[i - 1].t}"
            )
    for i, v in enumerate(trace.labels):
        if v not in (BENIGN, MINER):
            problems.append(f"label {i}: value {v} is not binary")
    kernels = trace.kernels
    for i, k in enumerate(kernels):
        if not k.duration_us > 0:
            problems.append(f"kernel {i}: duration_us={k.duration_us} must be > 0")
        for name in ("sm_throughput", "dram_throughput"):
            v = getattr(k, name)
            if not 0.0 <= v <= 100.0:
                problems.append(f"kernel {i}: {name}={v} outside [0, 100]")
        if not k.sm_freq > 0:
            problems.append(f"kernel {i}: sm_freq={k.sm_freq} must be > 0")
        if i and kernels[i - 1].t > k.t:
            problems.append(
                f"kernel {i}: t={k.t} earlier than previous t={kernels[i - 1].t}"
            )
    return problems


def _check_order(times: Sequence[float], what: str, strict: bool) -> None:
    for i in range(1, len(times)):
        bad = times[i] <= times[i - 1] if strict else times[i] < times[i - 1]
        if bad:
            raise ValueError(
                f"{what} out of order at index {i}: {times[i]!r} after {times[i - 1]!r}"
            )


def infer_interval(times: Sequence[float]) -> float:
    if len(times) < 2:
        return 1.0
    diffs = sorted(b - a for a, b in zip(times, times[1:]))
    return diffs[len(diffs) // 2]


def align_streams(
    samples: Sequence[TelemetrySample],
    kernels: Sequence[KernelRecord] = (),
    fps_log: Iterable[tuple[float, float]] = (),
    *,
    labels: Sequence[int] | None = None,
    interval_s: float | None = None,
    meta: TraceMeta | None = None,
) -> Trace:
    """Merge separately collected streams into one :class:`Trace`.

    Timestamps are absolute on input. They are rebased so the earliest
    timestamp over all three streams becomes ``t = 0``. Each FPS reading is
    attached to the sample nearest in time, provided it lies within half a
    sampling interval; readings further away are dropped. When two readings
    compete for one sample the closer one wins (earlier one on exact ties).
    """
    if not samples:
        raise ValueError("no samples")
    fps_log = list(fps_log)
    _check_order([s.t for s in samples], "samples", strict=True)
    _check_order([k.t for k in kernels], "kernels", strict=False)
    _check_order([t for t, _ in fps_log], "fps log", strict=False)

    sample_times = [s.t for s in samples]
    if interval_s is None:
        interval_s = meta.interval_s if meta is not None else infer_interval(sample_times)
    if not interval_s > 0:
        raise ValueError(f"interval_s must be positive, got {interval_s}")

    origin = min(
        [sample_times[0]]
        + ([kernels[0].t] if kernels else [])
        + ([fps_log[0][0]] if fps_log else [])
    )

    def rebase(ts: float) -> float:
        return round(ts - origin, TIME_DECIMALS) + 0.0

    times = [rebase(ts) for ts in sample_times]
    attached: dict[int, tuple[float, float]] = {}
    half = interval_s / 2.0
    for ts, fps in fps_log:
        ts = rebase(ts)
        j = bisect.bisect_left(times, ts)
        best = None
        for cand in (j - 1, j):
            if 0 <= cand < len(times):
                d = abs(times[cand] - ts)
                if d <= half and (best is None or d < best[1]):
                    best = (cand, d)
        if best is None:
            continue
        idx, d = best
        if idx not in attached or d < attached[idx][0]:
            attached[idx] = (d, fps)

    rebased = tuple(
        replace(s, t=times[i], fps=attached[i][1] if i in attached else s.fps)
        for i, s in enumerate(samples)
    )
    rebased_kernels = tuple(replace(k, t=rebase(k.t)) for k in kernels)
    if labels is None:
        labels = (BENIGN,) * len(samples)
    elif len(labels) != len(samples):
        raise ValueError(f"{len(samples)} samples, {len(labels)} labels")
    meta = replace(meta or TraceMeta(), interval_s=interval_s)
    return Trace(meta=meta, samples=rebased, kernels=rebased_kernels, labels=tuple(labels))
