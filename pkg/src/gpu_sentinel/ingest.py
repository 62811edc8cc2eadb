"""Parsers for device-sampler, kernel-profiler and FPS logs, and the
canonical on-disk trace format.

Sampler lines follow the ``nvidia-smi --query-gpu=timestamp,utilization.gpu,
memory.used,power.draw,clocks.sm,temperature.gpu --format=csv,noheader,nounits``
shape::

    2025/08/01 12:00:00.000, 40, 2800, 65.00, 1650, 62

Kernel lines are a six-column reduction of an Nsight Compute CSV report::

    "yolov8_conv",2025/08/01 12:00:00.400,1800.0,45.2,15.1,1850
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .trace import KernelRecord, TelemetrySample, Trace, TraceMeta, align_streams, infer_interval

TIMESTAMP_FORMAT = "%Y/%m/%d %H:%M:%S.%f"
SAMPLER_COLUMNS = ("timestamp", "gpu_util", "mem_used", "power", "sm_clock", "temperature")
KERNEL_COLUMNS = (
    "kernel_name",
    "timestamp",
    "duration_us",
    "sm_throughput_pct",
    "dram_throughput_pct",
    "sm_freq_mhz",
)
FPS_COLUMNS = ("timestamp", "fps")

TRACE_MAGIC = "GPUSENTINEL-TRACE"
TRACE_VERSION = "1"


class ParseError(ValueError):
    """A log line could not be parsed. ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)


@dataclass(frozen=True)
class RawSamplerRow:
    timestamp: str
    gpu_util: float
    mem_used: float
    power: float
    sm_clock: float
    temperature: float


@dataclass(frozen=True)
class RawKernelRow:
    kernel_name: str
    timestamp: str
    duration_us: float
    sm_throughput_pct: float
    dram_throughput_pct: float
    sm_freq_mhz: float


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text.strip(), TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.strftime("%Y/%m/%d %H:%M:%S.") + f"{dt.microsecond // 1000:03d}"


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _is_timestamp(text: str) -> bool:
    try:
        parse_timestamp(text)
    except ValueError:
        return False
    return True


def _is_header(fields_: list[str], ts_col: int, num_col: int) -> bool:
    # a data line with a bad number still starts with a valid timestamp
    return (
        len(fields_) > num_col
        and not _is_number(fields_[num_col])
        and not _is_timestamp(fields_[ts_col])
    )


def _decimal(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"invalid decimal {text!r} in column {column}", line, column) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ParseError(f"non-finite value {text!r} in column {column}", line, column)
    return value


def _timestamp(text: str, column: str, line: int) -> str:
    try:
        parse_timestamp(text)
    except ValueError:
        raise ParseError(f"invalid timestamp {text!r} in column {column}", line, column) from None
    return text


def _records(text: str | Iterable[str]):
    """Yield (1-based line number, stripped fields) for every non-blank line."""
    if isinstance(text, str):
        text = io.StringIO(text)
    reader = csv.reader(text, skipinitialspace=True)
    while True:
        try:
            fields_ = next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            raise ParseError(f"malformed CSV ({exc})", reader.line_num) from None
        if not fields_ or all(not f.strip() for f in fields_):
            continue
        yield reader.line_num, [f.strip() for f in fields_]


def _check_width(found: list[str], expected: int, line: int) -> None:
    if len(found) != expected:
        raise ParseError(f"expected {expected} columns, found {len(found)}", line)


def _parse_sampler_record(fields_: list[str], line: int) -> RawSamplerRow:
    _check_width(fields_, len(SAMPLER_COLUMNS), line)
    ts = _timestamp(fields_[0], "timestamp", line)
    nums = [_decimal(v, c, line) for v, c in zip(fields_[1:], SAMPLER_COLUMNS[1:])]
    return RawSamplerRow(ts, *nums)


def parse_sampler_csv(text: str | Iterable[str]) -> list[RawSamplerRow]:
    rows = []
    for n, (line, fields_) in enumerate(_records(text)):
        if n == 0 and _is_header(fields_, 0, 1):
            continue
        rows.append(_parse_sampler_record(fields_, line))
    return rows


def parse_sampler_line(line: str, line_no: int = 1) -> RawSamplerRow | None:
    """Parse one sampler line; returns ``None`` for blank and header lines."""
    recs = list(_records([line]))
    if not recs:
        return None
    _, fields_ = recs[0]
    if _is_header(fields_, 0, 1):
        return None
    return _parse_sampler_record(fields_, line_no)


def parse_kernel_csv(text: str | Iterable[str]) -> list[RawKernelRow]:
    rows = []
    for n, (line, fields_) in enumerate(_records(text)):
        if n == 0 and _is_header(fields_, 1, 2):
            continue
        _check_width(fields_, len(KERNEL_COLUMNS), line)
        name = fields_[0]
        ts = _timestamp(fields_[1], "timestamp", line)
        nums = [_decimal(v, c, line) for v, c in zip(fields_[2:], KERNEL_COLUMNS[2:])]
        rows.append(RawKernelRow(name, ts, *nums))
    return rows


def parse_fps_log(text: str | Iterable[str]) -> list[tuple[str, float]]:
    out = []
    for n, (line, fields_) in enumerate(_records(text)):
        if n == 0 and _is_header(fields_, 0, 1):
            continue
        _check_width(fields_, len(FPS_COLUMNS), line)
        ts = _timestamp(fields_[0], "timestamp", line)
        fps = _decimal(fields_[1], "fps", line)
        if fps < 0:
            raise ParseError(f"negative fps {fields_[1]!r}", line, "fps")
        out.append((ts, fps))
    return out


# -- serialization --------------------------------------------------------

def _num(x: float) -> str:
    """Integral values print without a fractional part, others shortest-repr."""
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _dec(x: float) -> str:
    return repr(float(x))


def format_sampler_csv(rows: Sequence[RawSamplerRow]) -> str:
    lines = [
        f"{r.timestamp}, {_num(r.gpu_util)}, {_num(r.mem_used)}, {r.power:.2f}, "
        f"{_num(r.sm_clock)}, {_num(r.temperature)}\n"
        for r in rows
    ]
    return "".join(lines)


def format_kernel_csv(rows: Sequence[RawKernelRow]) -> str:
    buf = io.StringIO()
    for r in rows:
        name = '"' + r.kernel_name.replace('"', '""') + '"'
        buf.write(
            f"{name},{r.timestamp},{_dec(r.duration_us)},{_dec(r.sm_throughput_pct)},"
            f"{_dec(r.dram_throughput_pct)},{_num(r.sm_freq_mhz)}\n"
        )
    return buf.getvalue()


def format_fps_log(rows: Sequence[tuple[str, float]]) -> str:
    return "".join(f"{ts},{_dec(fps)}\n" for ts, fps in rows)


def trace_to_raw(trace: Trace, start: datetime):
    """Render a trace as raw log rows anchored at wall-clock ``start``.

    Returns ``(sampler_rows, kernel_rows, fps_rows)``. Used to produce
    realistic log files from simulated traces.
    """
    from datetime import timedelta

    def stamp(t: float) -> str:
        return format_timestamp(start + timedelta(seconds=t))

    sampler = [
        RawSamplerRow(stamp(s.t), s.gpu_util, s.mem_used, s.power, s.sm_clock, s.temperature)
        for s in trace.samples
    ]
    kernels = [
        RawKernelRow(k.kernel_name, stamp(k.t), k.duration_us, k.sm_throughput,
                     k.dram_throughput, k.sm_freq)
        for k in trace.kernels
    ]
    fps = [(stamp(s.t), s.fps) for s in trace.samples if s.fps is not None]
    return sampler, kernels, fps


# -- loading raw logs -----------------------------------------------------

def _read(path: str | os.PathLike) -> str:
    return Path(path).read_text(encoding="utf-8")


def parse_labels(text: str) -> list[int]:
    labels = []
    for n, raw in enumerate(text.splitlines(), start=1):
        raw = raw.strip()
        if not raw:
            continue
        if raw not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {raw!r}", n, "label")
        labels.append(int(raw))
    return labels


def load_trace(
    sampler_path: str | os.PathLike,
    kernel_path: str | os.PathLike | None = None,
    fps_path: str | os.PathLike | None = None,
    labels_path: str | os.PathLike | None = None,
    *,
    interval_s: float | None = None,
    scenario_id: str | None = None,
) -> Trace:
    sampler_path = Path(sampler_path)
    if not sampler_path.exists():
        raise FileNotFoundError(f"sampler file not found: {sampler_path}")
    sampler = parse_sampler_csv(_read(sampler_path))
    kernels = parse_kernel_csv(_read(kernel_path)) if kernel_path else []
    fps = parse_fps_log(_read(fps_path)) if fps_path else []
    labels = parse_labels(_read(labels_path)) if labels_path else None
    if labels is not None and len(labels) != len(sampler):
        raise ValueError(f"{len(sampler)} samples, {len(labels)} labels")

    # offsets come from datetime arithmetic (exact to the microsecond) relative
    # to the earliest stamp, so rebasing introduces no float error
    stamps = [parse_timestamp(r.timestamp) for r in sampler]
    kstamps = [parse_timestamp(r.timestamp) for r in kernels]
    fstamps = [parse_timestamp(ts) for ts, _ in fps]
    if not stamps:
        raise ValueError("no samples")
    origin = min(stamps[:1] + kstamps[:1] + fstamps[:1])

    def off(dt: datetime) -> float:
        return (dt - origin).total_seconds()

    samples = [
        TelemetrySample(off(dt), r.gpu_util, r.mem_used, r.power, r.sm_clock, r.temperature)
        for dt, r in zip(stamps, sampler)
    ]
    krecs = [
        KernelRecord(off(dt), r.kernel_name, r.duration_us, r.sm_throughput_pct,
                     r.dram_throughput_pct, r.sm_freq_mhz)
        for dt, r in zip(kstamps, kernels)
    ]
    fps_log = [(off(dt), v) for dt, (_, v) in zip(fstamps, fps)]
    if interval_s is None:
        interval_s = round(infer_interval([s.t for s in samples]), 6)
    meta = TraceMeta(
        scenario_id=scenario_id or sampler_path.stem,
        description=f"ingested from {sampler_path.name}",
    )
    return align_streams(samples, krecs, fps_log, labels=labels,
                         interval_s=interval_s, meta=meta)


# -- canonical trace file -------------------------------------------------

_SAMPLE_HEADER = [f.name for f in fields(TelemetrySample)]
_KERNEL_HEADER = [f.name for f in fields(KernelRecord)]
_META_KEYS = [f.name for f in fields(TraceMeta)]


def dumps_trace(trace: Trace) -> str:
    out = io.StringIO()
    out.write(f"{TRACE_MAGIC} v{TRACE_VERSION}\n[meta]\n")
    for key in _META_KEYS:
        out.write(f"{key}={json.dumps(getattr(trace.meta, key))}\n")
    out.write("[samples]\n" + ",".join(_SAMPLE_HEADER) + "\n")
    for s in trace.samples:
        vals = [_dec(getattr(s, k)) for k in _SAMPLE_HEADER[:-1]]
        vals.append("" if s.fps is None else _dec(s.fps))
        out.write(",".join(vals) + "\n")
    out.write("[kernels]\n" + ",".join(_KERNEL_HEADER) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    for k in trace.kernels:
        writer.writerow([_dec(k.t), k.kernel_name, _dec(k.duration_us),
                         _dec(k.sm_throughput), _dec(k.dram_throughput), _dec(k.sm_freq)])
    out.write("[labels]\n")
    out.write("".join(f"{v}\n" for v in trace.labels))
    return out.getvalue()


def loads_trace(text: str) -> Trace:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty trace file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != TRACE_MAGIC:
        raise ParseError(f"not a trace file (first line {lines[0]!r})", 1)
    if head[1] != f"v{TRACE_VERSION}":
        raise ParseError(f"unsupported version {head[1].lstrip('v')!r}", 1)

    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for n, line in enumerate(lines[1:], start=2):
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            raise ParseError("content before first section", n)
        else:
            sections[current].append((n, line))
    for name in ("meta", "samples", "kernels", "labels"):
        if name not in sections:
            raise ParseError(f"missing [{name}] section")

    meta_kw = {}
    for n, line in sections["meta"]:
        key, sep, value = line.partition("=")
        if not sep or key not in _META_KEYS:
            raise ParseError(f"bad meta entry {line!r}", n)
        meta_kw[key] = json.loads(value)
    meta = TraceMeta(**meta_kw)

    def body(name, header):
        rows = sections[name]
        if not rows or rows[0][1] != ",".join(header):
            raise ParseError(f"[{name}] header must be {','.join(header)!r}")
        return rows[1:]

    samples = []
    for n, line in body("samples", _SAMPLE_HEADER):
        parts = line.split(",")
        _check_width(parts, len(_SAMPLE_HEADER), n)
        vals = [_decimal(p, c, n) for p, c in zip(parts[:-1], _SAMPLE_HEADER)]
        fps = _decimal(parts[-1], "fps", n) if parts[-1] else None
        samples.append(TelemetrySample(*vals, fps=fps))
    kernels = []
    for n, line in body("kernels", _KERNEL_HEADER):
        parts = next(csv.reader([line]))
        _check_width(parts, len(_KERNEL_HEADER), n)
        kernels.append(KernelRecord(
            _decimal(parts[0], "t", n), parts[1],
            *(_decimal(p, c, n) for p, c in zip(parts[2:], _KERNEL_HEADER[2:])),
        ))
    labels = []
    for n, line in sections["labels"]:
        if line not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {line!r}", n)
        labels.append(int(line))
    return Trace(meta=meta, samples=samples, kernels=kernels, labels=labels)


def save_trace(trace: Trace, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(dumps_trace(trace), encoding="utf-8", newline="\n")
    return path


def load_canonical(path: str | os.PathLike) -> Trace:
    return loads_trace(Path(path).read_text(encoding="utf-8"))
