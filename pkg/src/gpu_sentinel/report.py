"""Per-regime channel summaries and SVG line charts."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .features import FEATURE_CHANNELS, KERNEL_FEATURE_CHANNELS
from .trace import Trace

SVG_WIDTH = 800
SVG_HEIGHT = 400
UNITS = {
    "fps": "frames/s",
    "power": "W",
    "gpu_util": "%",
    "mem_used": "MiB",
    "sm_clock": "MHz",
    "duration_us": "us",
    "sm_throughput": "% of peak",
    "dram_throughput": "% of peak",
}
SERIES_COLORS = ("#1f77b4", "#d62728")


@dataclass(frozen=True)
class ChannelSummary:
    channel: str
    benign_mean: float
    miner_mean: float

    @property
    def delta_pct(self) -> float:
        if self.benign_mean == 0:
            return 0.0 if self.miner_mean == 0 else math.copysign(math.inf, self.miner_mean)
        return 100.0 * (self.miner_mean - self.benign_mean) / self.benign_mean


def _channel_values(trace: Trace, channel: str, regime: int | None) -> list[float]:
    """Values of one channel, restricted to samples (or kernels falling in
    samples) whose label equals ``regime``; ``None`` keeps everything."""
    if channel in KERNEL_FEATURE_CHANNELS:
        times = trace.times
        out = []
        for k in trace.kernels:
            if regime is not None:
                i = bisect.bisect_right(times, k.t) - 1
                if trace.labels[max(i, 0)] != regime:
                    continue
            out.append(getattr(k, channel))
        return out
    return [
        getattr(s, channel)
        for s, lab in zip(trace.samples, trace.labels)
        if getattr(s, channel) is not None and (regime is None or lab == regime)
    ]


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else 0.0


def summarize(benign: Trace, miner: Trace | None = None) -> list[ChannelSummary]:
    """Compare regimes either across two traces or, with one mixed trace,
    between its benign-labeled and miner-labeled samples."""
    if miner is None:
        counts = {lab: benign.labels.count(lab) for lab in (0, 1)}
        if not counts[0] or not counts[1]:
            raise ValueError(
                "mixed trace needs both benign and miner samples "
                f"(found {counts[0]} benign, {counts[1]} miner)"
            )
        pairs = [(benign, 0), (benign, 1)]
    else:
        pairs = [(benign, None), (miner, None)]
    return [
        ChannelSummary(
            ch,
            _mean(_channel_values(pairs[0][0], ch, pairs[0][1])),
            _mean(_channel_values(pairs[1][0], ch, pairs[1][1])),
        )
        for ch in FEATURE_CHANNELS
    ]


def summary_csv(rows: Sequence[ChannelSummary]) -> str:
    lines = ["channel,benign_mean,miner_mean,delta_pct"]
    for r in rows:
        lines.append(f"{r.channel},{r.benign_mean:.4f},{r.miner_mean:.4f},{r.delta_pct:.2f}")
    return "\n".join(lines) + "\n"


def summary_table(rows: Sequence[ChannelSummary]) -> str:
    head = f"{'channel':<16} {'benign':>12} {'miner':>12} {'delta':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.channel:<16} {r.benign_mean:>12.2f} {r.miner_mean:>12.2f} {r.delta_pct:>+9.2f}%"
        )
    return "\n".join(lines) + "\n"


# -- SVG ------------------------------------------------------------------

def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_chart_svg(
    series: Sequence[tuple[str, Sequence[tuple[float, float]]]],
    title: str,
    y_label: str,
    x_label: str = "time (s)",
    marker_t: float | None = None,
) -> str:
    """Self-contained 800x400 SVG with one polyline per series."""
    left, right, top, bottom = 70, 20, 40, 55
    pw, ph = SVG_WIDTH - left - right, SVG_HEIGHT - top - bottom
    pts = [p for _, s in series for p in s]
    xs = [p[0] for p in pts] + ([marker_t] if marker_t is not None else [])
    ys = [p[1] for p in pts]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    pad = (y1 - y0) * 0.05 or 1.0
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{SVG_WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="15">'
        f'{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        out.append(f'<line x1="{_fmt(px(t))}" y1="{top + ph}" x2="{_fmt(px(t))}" '
                   f'y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(t))}" y="{top + ph + 18}" text-anchor="middle">'
                   f'{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{_fmt(py(t))}" x2="{left}" '
                   f'y2="{_fmt(py(t))}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(py(t) + 4)}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2:.0f}" y="{SVG_HEIGHT - 12}" text-anchor="middle">'
               f'{escape(x_label)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.0f})">{escape(y_label)}</text>')
    if marker_t is not None:
        mx = _fmt(px(marker_t))
        out.append(f'<line x1="{mx}" y1="{top}" x2="{mx}" y2="{top + ph}" stroke="gray" '
                   f'stroke-dasharray="6,4"/>')
        out.append(f'<text x="{mx}" y="{top - 4}" text-anchor="middle" fill="gray">'
                   f'miner onset</text>')
    for i, (name, s) in enumerate(series):
        color = SERIES_COLORS[i % len(SERIES_COLORS)]
        if s:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in s)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                       f'points="{coords}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 150}" y1="{ly - 4}" x2="{left + pw - 130}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 125}" y="{ly}">{escape(name)}</text>')
    if not pts:
        out.append(f'<text x="{left + pw / 2:.0f}" y="{top + ph / 2:.0f}" '
                   f'text-anchor="middle">no data</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _series(trace: Trace, channel: str) -> list[tuple[float, float]]:
    return [(s.t, getattr(s, channel)) for s in trace.samples if getattr(s, channel) is not None]


def onset_time(trace: Trace) -> float | None:
    for s, lab in zip(trace.samples, trace.labels):
        if lab == 1:
            return s.t
    return None


def charts(benign: Trace, miner: Trace | None = None) -> dict[str, str]:
    """``{"fps.svg": ..., "power.svg": ...}``."""
    out = {}
    for channel, title in (("fps", "Frame rate over time"),
                           ("power", "GPU power draw over time")):
        y_label = f"{channel} ({UNITS[channel]})"
        if miner is None:
            svg = line_chart_svg([(benign.meta.scenario_id, _series(benign, channel))],
                                 title, y_label, marker_t=onset_time(benign))
        else:
            svg = line_chart_svg([("without miner", _series(benign, channel)),
                                  ("with miner", _series(miner, channel))], title, y_label)
        out[f"{channel}.svg"] = svg
    return out
