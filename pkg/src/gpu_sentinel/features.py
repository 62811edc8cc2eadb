"""Windowed feature extraction.

Every window yields 40 values: five statistics (mean, population std, min,
max, least-squares slope against sample index) over eight channels, in the
fixed order of :data:`FEATURE_NAMES`.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .trace import KernelRecord, TelemetrySample, Trace

SAMPLE_FEATURE_CHANNELS = ("fps", "power", "gpu_util", "mem_used", "sm_clock")
KERNEL_FEATURE_CHANNELS = ("duration_us", "sm_throughput", "dram_throughput")
FEATURE_CHANNELS = SAMPLE_FEATURE_CHANNELS + KERNEL_FEATURE_CHANNELS
STATISTICS = ("mean", "std", "min", "max", "slope")
FEATURE_NAMES = tuple(f"{c}.{s}" for c in FEATURE_CHANNELS for s in STATISTICS)

DEFAULT_WIDTH = 30
DEFAULT_STRIDE = 10


@dataclass(frozen=True)
class WindowSpec:
    width: int = DEFAULT_WIDTH
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 2:
            raise ValueError(f"window width must be an integer >= 2, got {self.width}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError(f"window stride must be an integer >= 1, got {self.stride}")

    def count(self, n_samples: int) -> int:
        if n_samples < self.width:
            return 0
        return (n_samples - self.width) // self.stride + 1


@dataclass
class FeatureVector:
    values: np.ndarray
    window_start_t: float
    window_end_t: float
    label: int | None = None
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class Window:
    samples: Sequence[TelemetrySample]
    kernels: Sequence[KernelRecord]
    start_t: float
    end_t: float


def channel_stats(values: Sequence[float]) -> np.ndarray:
    """mean, population std, min, max and slope per index of one series."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        return np.zeros(len(STATISTICS))
    mean = x.mean()
    if n > 1:
        idx = np.arange(n, dtype=float)
        idx -= idx.mean()
        slope = float(np.dot(idx, x - mean) / np.dot(idx, idx))
    else:
        slope = 0.0
    return np.array([mean, x.std(), x.min(), x.max(), slope])


def extract_window_features(
    samples: Sequence[TelemetrySample],
    kernels: Sequence[KernelRecord] = (),
    start_t: float | None = None,
    end_t: float | None = None,
    label: int | None = None,
) -> FeatureVector:
    """Statistics for one window.

    ``kernels`` should already be restricted to ``[start_t, end_t)``; records
    outside that span are ignored. Channels with no data contribute zeros and
    mark the vector degenerate.
    """
    if len(samples) < 2:
        raise ValueError(f"window needs at least 2 samples, got {len(samples)}")
    if start_t is None:
        start_t = samples[0].t
    if end_t is None:
        end_t = samples[-1].t + (samples[-1].t - samples[-2].t)
    kernels = [k for k in kernels if start_t <= k.t < end_t]

    columns: list[list[float]] = []
    for name in SAMPLE_FEATURE_CHANNELS:
        columns.append([getattr(s, name) for s in samples if getattr(s, name) is not None])
    for name in KERNEL_FEATURE_CHANNELS:
        columns.append([getattr(k, name) for k in kernels])
    degenerate = any(not col for col in columns)
    values = np.concatenate([channel_stats(col) for col in columns])
    return FeatureVector(values, float(start_t), float(end_t), label, degenerate)


def window_label(labels: Sequence[int]) -> int:
    return int(2 * sum(labels) >= len(labels))


def windows(trace: Trace, spec: WindowSpec) -> list[tuple[Window, int]]:
    n = len(trace.samples)
    if n < spec.width:
        raise ValueError(f"trace has {n} samples, shorter than one window of {spec.width}")
    ktimes = np.array([k.t for k in trace.kernels], dtype=float)
    interval = trace.meta.interval_s
    out = []
    for start in range(0, n - spec.width + 1, spec.stride):
        chunk = trace.samples[start:start + spec.width]
        t0, t1 = chunk[0].t, chunk[-1].t + interval
        lo, hi = np.searchsorted(ktimes, [t0, t1], side="left")
        w = Window(chunk, trace.kernels[lo:hi], t0, t1)
        out.append((w, window_label(trace.labels[start:start + spec.width])))
    return out


def trace_features(trace: Trace, spec: WindowSpec) -> list[FeatureVector]:
    return [
        extract_window_features(w.samples, w.kernels, w.start_t, w.end_t, label)
        for w, label in windows(trace, spec)
    ]


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (x - self.mean) / safe, 0.0)

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean


@dataclass
class Dataset:
    feature_names: tuple[str, ...]
    rows: list[FeatureVector]
    scaler: Scaler | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(self.feature_names)))
        return np.vstack([r.values for r in self.rows])

    @property
    def y(self) -> np.ndarray:
        return np.array([-1 if r.label is None else r.label for r in self.rows], dtype=int)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return replace(self, rows=[self.rows[i] for i in indices])


def build_dataset(traces: Sequence[Trace], spec: WindowSpec) -> Dataset:
    if not traces:
        raise ValueError("no traces given")
    usable = [t for t in traces if len(t.samples) >= spec.width]
    if not usable:
        raise ValueError(f"every trace is shorter than the window width {spec.width}")
    rows: list[FeatureVector] = []
    for trace in usable:
        rows.extend(trace_features(trace, spec))
    return Dataset(FEATURE_NAMES, rows, meta={"width": spec.width, "stride": spec.stride})


def fit_scaler(X: np.ndarray) -> Scaler:
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError(f"need at least 2 rows to fit a standardizer, got {X.shape[0]}")
    return Scaler(X.mean(axis=0), X.std(axis=0))


def fit_standardizer(dataset: Dataset) -> Dataset:
    return replace(dataset, scaler=fit_scaler(dataset.X))


def apply_standardizer(scaler: Scaler, vector) -> np.ndarray:
    if isinstance(vector, FeatureVector):
        vector = vector.values
    return scaler.apply(vector)


# -- dataset CSV ----------------------------------------------------------

def dumps_dataset(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(dataset.feature_names) + ["label"])
    for r in dataset.rows:
        writer.writerow([repr(float(v)) for v in r.values] + ["" if r.label is None else r.label])
    return buf.getvalue()


def loads_dataset(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty dataset file") from None
    if not header or header[-1] != "label":
        raise ValueError("dataset header must end with 'label'")
    names = tuple(header[:-1])
    rows = []
    for line in reader:
        if not line:
            continue
        if len(line) != len(header):
            raise ValueError(
                f"expected {len(header)} columns, found {len(line)} at line {reader.line_num}"
            )
        values = np.array([float(v) for v in line[:-1]])
        rows.append(FeatureVector(values, 0.0, 0.0, int(line[-1]) if line[-1] else None))
    return Dataset(names, rows)


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8")


def load_dataset(path: str | os.PathLike) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))
