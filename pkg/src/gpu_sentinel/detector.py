"""Online detection over a growing telemetry stream.

A window closes once the stream has moved past its end time, or when the
stream ends, so kernel records that trail the last sample of a window are
still counted. Scores are computed with the same extraction and prediction
code as the batch path, which keeps streamed and batch verdicts identical.
"""
from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, TextIO

from .classifiers import Model, predict_score
from .classifiers.models import DEFAULT_THRESHOLD
from .features import FEATURE_NAMES, WindowSpec, extract_window_features
from .ingest import ParseError, parse_sampler_line, parse_timestamp
from .trace import KernelRecord, TelemetrySample, Trace

log = logging.getLogger(__name__)

DEFAULT_DEBOUNCE = 3


@dataclass(frozen=True)
class DetectionVerdict:
    window_start_t: float
    window_end_t: float
    score: float
    label: int
    source: str = "model"


@dataclass(frozen=True)
class AlertEvent:
    t_raised: float
    consecutive_positives: int
    verdicts: tuple[DetectionVerdict, ...]

    def to_record(self) -> dict:
        last = self.verdicts[-1]
        return {
            "t": self.t_raised,
            "score": last.score,
            "source": last.source,
            "window_start": last.window_start_t,
            "window_end": last.window_end_t,
            "consecutive_positives": self.consecutive_positives,
        }


@dataclass(frozen=True)
class RuleThresholds:
    min_gpu_util: float = 95.0
    min_power: float = 85.0
    min_sustain_s: float = 60.0

    def __post_init__(self):
        for name in ("min_gpu_util", "min_power", "min_sustain_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def parse(cls, text: str) -> "RuleThresholds":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"thresholds must be util,power,sustain; got {text!r}")
        return cls(*(float(p) for p in parts))


@dataclass(frozen=True)
class StreamError:
    """An in-band stream item for an input line that failed to parse."""
    message: str
    line: int | None = None


class Debouncer:
    """Raises an alert on the k-th consecutive positive verdict, then stays
    quiet until a negative verdict resets the run."""

    def __init__(self, k: int = DEFAULT_DEBOUNCE):
        if k < 1:
            raise ValueError("debounce k must be >= 1")
        self.k = k
        self.run: deque[DetectionVerdict] = deque(maxlen=k)
        self.count = 0
        self.fired = False

    def push(self, verdict: DetectionVerdict) -> AlertEvent | None:
        if verdict.label != 1:
            self.run.clear()
            self.count = 0
            self.fired = False
            return None
        self.run.append(verdict)
        self.count += 1
        if self.count >= self.k and not self.fired:
            self.fired = True
            return AlertEvent(verdict.window_end_t, self.count, tuple(self.run))
        return None


# -- rule baseline --------------------------------------------------------

def rule_detect(
    samples: list[TelemetrySample],
    thresholds: RuleThresholds | None = None,
    interval_s: float = 1.0,
) -> DetectionVerdict:
    """Positive iff every sample shows both high utilization and high power."""
    thresholds = thresholds or RuleThresholds()
    if not samples:
        raise ValueError("empty window")
    span = samples[-1].t - samples[0].t + interval_s
    if span + 1e-9 < thresholds.min_sustain_s:
        raise ValueError(
            f"window covers {span:g} s, shorter than the sustain period "
            f"{thresholds.min_sustain_s:g} s"
        )
    hits = [
        s.gpu_util >= thresholds.min_gpu_util and s.power >= thresholds.min_power
        for s in samples
    ]
    return DetectionVerdict(
        samples[0].t, samples[-1].t + interval_s, sum(hits) / len(hits),
        int(all(hits)), "rules",
    )


# -- streaming ------------------------------------------------------------

@dataclass
class _Pending:
    samples: list[TelemetrySample]
    start_t: float
    end_t: float


def _stream_windows(
    stream: Iterable,
    width: int,
    stride: int,
    interval_s: float,
    on_error: Callable[[StreamError], None],
) -> Iterator[tuple[_Pending, list[KernelRecord]]]:
    """Yield closed windows in order with their co-temporal kernel records."""
    buffer: deque[TelemetrySample] = deque()
    kernels: deque[KernelRecord] = deque()
    pending: deque[_Pending] = deque()
    n_seen = 0

    def close_ready(now: float | None):
        while pending and (now is None or now >= pending[0].end_t):
            w = pending.popleft()
            ks = [k for k in kernels if w.start_t <= k.t < w.end_t]
            # only windows not yet closed can still need older kernels
            floor = pending[0].start_t if pending else (buffer[0].t if buffer else w.end_t)
            while kernels and kernels[0].t < floor:
                kernels.popleft()
            yield w, ks

    for item in stream:
        if isinstance(item, StreamError):
            on_error(item)
            continue
        yield from close_ready(item.t)
        if isinstance(item, KernelRecord):
            kernels.append(item)
            continue
        buffer.append(item)
        n_seen += 1
        if len(buffer) > width:
            buffer.popleft()
        if n_seen >= width and (n_seen - width) % stride == 0:
            chunk = list(buffer)
            pending.append(_Pending(chunk, chunk[0].t, chunk[-1].t + interval_s))
    yield from close_ready(None)


def _log_error(err: StreamError) -> None:
    log.warning("stream error: %s", err.message)


def stream_detect(
    model: Model,
    stream: Iterable,
    spec: WindowSpec | None = None,
    debounce_k: int = DEFAULT_DEBOUNCE,
    *,
    interval_s: float = 1.0,
    threshold: float = DEFAULT_THRESHOLD,
    on_error: Callable[[StreamError], None] = _log_error,
) -> Iterator[tuple[DetectionVerdict, AlertEvent | None]]:
    """Score each completed window of a time-ordered stream of samples and
    kernel records. Yields ``(verdict, alert_or_None)`` lazily."""
    spec = spec or WindowSpec()
    if tuple(model.feature_names) != FEATURE_NAMES:
        raise ValueError(
            f"model expects {len(model.feature_names)} features that do not match the "
            f"{len(FEATURE_NAMES)}-feature window extractor"
        )
    debouncer = Debouncer(debounce_k)
    for w, ks in _stream_windows(stream, spec.width, spec.stride, interval_s, on_error):
        fv = extract_window_features(w.samples, ks, w.start_t, w.end_t)
        score = predict_score(model, fv)
        verdict = DetectionVerdict(w.start_t, w.end_t, score, int(score >= threshold), "model")
        yield verdict, debouncer.push(verdict)


def stream_rule_detect(
    stream: Iterable,
    thresholds: RuleThresholds | None = None,
    stride: int = 10,
    debounce_k: int = DEFAULT_DEBOUNCE,
    *,
    interval_s: float = 1.0,
    on_error: Callable[[StreamError], None] = _log_error,
) -> Iterator[tuple[DetectionVerdict, AlertEvent | None]]:
    """Rule baseline over windows exactly one sustain period long."""
    thresholds = thresholds or RuleThresholds()
    width = max(2, math.ceil(thresholds.min_sustain_s / interval_s - 1e-9))
    debouncer = Debouncer(debounce_k)
    for w, _ in _stream_windows(stream, width, stride, interval_s, on_error):
        verdict = rule_detect(w.samples, thresholds, interval_s)
        yield verdict, debouncer.push(verdict)


def replay(trace: Trace) -> Iterator[TelemetrySample | KernelRecord]:
    """Interleave a recorded trace's samples and kernels in time order
    (kernels first on equal timestamps)."""
    samples, kernels = trace.samples, trace.kernels
    i = j = 0
    while i < len(samples) or j < len(kernels):
        if j < len(kernels) and (i >= len(samples) or kernels[j].t <= samples[i].t):
            yield kernels[j]
            j += 1
        else:
            yield samples[i]
            i += 1


# -- file tailing ---------------------------------------------------------

def tail_file(
    path: str | os.PathLike,
    poll_interval: float = 0.5,
    *,
    grace_s: float = 10.0,
    idle_timeout: float | None = None,
    stop: threading.Event | None = None,
    from_start: bool = True,
) -> Iterator[TelemetrySample | StreamError]:
    """Follow a sampler log as it grows.

    Complete lines are parsed into samples whose ``t`` is seconds since the
    first sample seen. A trailing line without a newline is held back until
    it is completed. Bad lines become :class:`StreamError` items and the
    stream carries on. The generator ends when ``stop`` is set or no new data
    arrives for ``idle_timeout`` seconds; otherwise it runs forever.
    """
    path = Path(path)
    deadline = time.monotonic() + grace_s
    while not path.exists():
        if time.monotonic() >= deadline:
            raise FileNotFoundError(f"{path} did not appear within {grace_s:g} s")
        if stop is not None and stop.is_set():
            return
        time.sleep(min(poll_interval, max(deadline - time.monotonic(), 0.0)))

    origin = None
    line_no = 0
    partial = ""
    last_data = time.monotonic()
    with path.open("r", encoding="utf-8", newline="") as fh:
        if not from_start:
            fh.seek(0, os.SEEK_END)
        while True:
            chunk = fh.read()
            if chunk:
                last_data = time.monotonic()
                partial += chunk
                *lines, partial = partial.split("\n")
                for raw in lines:
                    line_no += 1
                    raw = raw.rstrip("\r")
                    try:
                        row = parse_sampler_line(raw, line_no)
                    except ParseError as exc:
                        yield StreamError(str(exc), line_no)
                        continue
                    if row is None:
                        continue
                    ts = parse_timestamp(row.timestamp)
                    if origin is None:
                        origin = ts
                    yield TelemetrySample(
                        (ts - origin).total_seconds(), row.gpu_util, row.mem_used,
                        row.power, row.sm_clock, row.temperature,
                    )
                continue
            if stop is not None and stop.is_set():
                return
            if idle_timeout is not None and time.monotonic() - last_data >= idle_timeout:
                return
            time.sleep(poll_interval)


# -- alert sink -----------------------------------------------------------

@dataclass
class AlertSink:
    """Writes one JSON object per alert, one per line."""
    out: TextIO
    count: int = field(default=0)

    def write(self, alert: AlertEvent) -> None:
        self.out.write(json.dumps(alert.to_record(), sort_keys=True) + "\n")
        self.out.flush()
        self.count += 1
