"""Synthetic benign / miner-contaminated telemetry.

Each channel is an independent Gaussian draw per sample, rounded to the
precision the real tools report and clipped to the channel's bounds. A miner
regime starts at ``miner_onset_s`` and its means ramp in linearly over
``ramp_s`` seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .trace import BENIGN, MINER, KernelRecord, TelemetrySample, Trace, TraceMeta

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

CHANNELS = (
    "fps",
    "power",
    "gpu_util",
    "mem_used",
    "sm_clock",
    "temperature",
    "duration_us",
    "sm_throughput",
    "dram_throughput",
)
SAMPLE_CHANNELS = CHANNELS[:6]
KERNEL_CHANNELS = CHANNELS[6:]

# decimals kept per channel, matching what nvidia-smi / Nsight report
DECIMALS = {
    "fps": 1,
    "power": 2,
    "gpu_util": 0,
    "mem_used": 0,
    "sm_clock": 0,
    "temperature": 0,
    "duration_us": 1,
    "sm_throughput": 1,
    "dram_throughput": 1,
}

BENIGN_KERNEL = "yolov8_conv"
MINER_KERNEL = "kawpow_hash"


@dataclass(frozen=True)
class ChannelParams:
    mean: float
    std: float
    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"std must be >= 0, got {self.std}")
        if not self.lo <= self.mean <= self.hi:
            raise ValueError(f"mean {self.mean} outside clip bounds [{self.lo}, {self.hi}]")


def _pct(mean: float, std: float) -> ChannelParams:
    return ChannelParams(mean, std, 0.0, 100.0)


@dataclass(frozen=True)
class RegimeParams:
    fps: ChannelParams
    power: ChannelParams
    gpu_util: ChannelParams
    mem_used: ChannelParams
    sm_clock: ChannelParams
    temperature: ChannelParams
    duration_us: ChannelParams
    sm_throughput: ChannelParams
    dram_throughput: ChannelParams

    def __post_init__(self):
        for name in ("gpu_util", "sm_throughput", "dram_throughput"):
            ch = getattr(self, name)
            if ch.lo < 0 or ch.hi > 100:
                raise ValueError(f"{name} clip bounds must lie within [0, 100]")

    def channel(self, name: str) -> ChannelParams:
        return getattr(self, name)


def default_benign_params() -> RegimeParams:
    return RegimeParams(
        fps=ChannelParams(28.0, 1.0),
        power=ChannelParams(65.0, 4.0),
        gpu_util=_pct(40.0, 8.0),
        mem_used=ChannelParams(2800.0, 100.0),
        sm_clock=ChannelParams(1850.0, 30.0, 1.0),
        temperature=ChannelParams(62.0, 2.0),
        duration_us=ChannelParams(1800.0, 400.0, 1.0),
        sm_throughput=_pct(45.0, 12.0),
        dram_throughput=_pct(15.0, 5.0),
    )


def default_miner_params() -> RegimeParams:
    return RegimeParams(
        fps=ChannelParams(14.0, 1.0),
        power=ChannelParams(110.0, 12.0, 95.0, 159.0),
        gpu_util=_pct(99.0, 0.5),
        mem_used=ChannelParams(3900.0, 80.0),
        sm_clock=ChannelParams(1790.0, 25.0, 1.0),
        temperature=ChannelParams(70.0, 2.0),
        duration_us=ChannelParams(3500.0, 500.0, 1.0),
        sm_throughput=_pct(92.0, 2.0),
        dram_throughput=_pct(38.0, 6.0),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float = 600.0
    interval_s: float = 1.0
    miner_onset_s: float | None = None
    ramp_s: float = 5.0
    seed: int = 42
    benign: RegimeParams = field(default_factory=default_benign_params)
    miner: RegimeParams = field(default_factory=default_miner_params)
    name: str = "sim"

    def __post_init__(self):
        if not self.interval_s > 0:
            raise ValueError("interval_s must be > 0")
        if self.ramp_s < 0:
            raise ValueError("ramp_s must be >= 0")
        if self.miner_onset_s is not None and not 0 <= self.miner_onset_s < self.duration_s:
            raise ValueError(
                f"miner_onset_s {self.miner_onset_s} outside [0, {self.duration_s})"
            )


def _sample_count(duration_s: float, interval_s: float) -> int:
    # tolerate 600 / 0.1 landing a hair under 6000
    return int(math.floor(duration_s / interval_s + 1e-9))


def _finish(name: str, value: float, ch: ChannelParams) -> float:
    v = round(float(value), DECIMALS[name])
    return float(min(max(v, ch.lo), ch.hi)) + 0.0


def _ramp_fraction(t: float, onset: float, ramp_s: float) -> float:
    if ramp_s <= 0:
        return 1.0
    return min(max((t - onset) / ramp_s, 0.0), 1.0)


def simulate_trace(config: ScenarioConfig) -> Trace:
    if config.duration_s <= 0:
        raise ValueError("empty scenario")
    n = _sample_count(config.duration_s, config.interval_s)
    if n == 0:
        raise ValueError("empty scenario")
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((n, len(CHANNELS)))

    onset = config.miner_onset_s
    samples, kernels, labels = [], [], []
    for i in range(n):
        t = i * config.interval_s
        miner_active = onset is not None and t >= onset
        f = _ramp_fraction(t, onset, config.ramp_s) if miner_active else 0.0
        bounds = config.miner if miner_active else config.benign
        vals = {}
        for j, name in enumerate(CHANNELS):
            b, m = config.benign.channel(name), config.miner.channel(name)
            mean = (1 - f) * b.mean + f * m.mean
            std = (1 - f) * b.std + f * m.std
            vals[name] = _finish(name, mean + std * z[i, j], bounds.channel(name))
        samples.append(TelemetrySample(t=t, **{c: vals[c] for c in SAMPLE_CHANNELS}))
        kernels.append(KernelRecord(
            t,
            MINER_KERNEL if miner_active else BENIGN_KERNEL,
            vals["duration_us"],
            vals["sm_throughput"],
            vals["dram_throughput"],
            vals["sm_clock"],
        ))
        labels.append(MINER if miner_active else BENIGN)

    kind = "benign" if onset is None else f"miner onset {onset!r}s ramp {config.ramp_s!r}s"
    meta = TraceMeta(
        scenario_id=config.name,
        seed=config.seed,
        interval_s=config.interval_s,
        description=f"simulated {config.duration_s!r}s, {kind}",
        onset_s=onset,
        rng=RNG_ALGORITHM,
    )
    return Trace(meta=meta, samples=samples, kernels=kernels, labels=labels)


def inject_miner(
    benign_trace: Trace,
    onset_s: float,
    miner: RegimeParams | None = None,
    ramp_s: float = 5.0,
    seed: int = 0,
) -> Trace:
    """Overwrite everything from ``onset_s`` on with miner-regime readings.

    During the ramp each value is a blend of the original reading and a fresh
    miner draw. Samples before the onset are returned untouched.
    """
    miner = miner or default_miner_params()
    if not benign_trace.samples:
        raise ValueError("empty trace")
    last_t = benign_trace.samples[-1].t
    if onset_s < 0 or onset_s > last_t:
        raise ValueError(f"onset {onset_s} outside trace span [0, {last_t}]")
    rng = np.random.default_rng(seed)

    samples = list(benign_trace.samples)
    labels = list(benign_trace.labels)
    post = [i for i, s in enumerate(samples) if s.t >= onset_s]
    z = rng.standard_normal((len(post), len(SAMPLE_CHANNELS)))
    for row, i in enumerate(post):
        s = samples[i]
        f = _ramp_fraction(s.t, onset_s, ramp_s)
        vals = {}
        for j, name in enumerate(SAMPLE_CHANNELS):
            orig = getattr(s, name)
            if orig is None:
                vals[name] = None
                continue
            ch = miner.channel(name)
            draw = ch.mean + ch.std * z[row, j]
            vals[name] = _finish(name, (1 - f) * orig + f * draw, ch)
        samples[i] = replace(s, **vals)
        labels[i] = MINER

    kernels = list(benign_trace.kernels)
    kpost = [i for i, k in enumerate(kernels) if k.t >= onset_s]
    zk = rng.standard_normal((len(kpost), len(KERNEL_CHANNELS) + 1))
    for row, i in enumerate(kpost):
        k = kernels[i]
        f = _ramp_fraction(k.t, onset_s, ramp_s)
        vals = {}
        for j, (name, attr) in enumerate(zip(
            KERNEL_CHANNELS + ("sm_clock",),
            ("duration_us", "sm_throughput", "dram_throughput", "sm_freq"),
        )):
            ch = miner.channel(name)
            draw = ch.mean + ch.std * zk[row, j]
            vals[attr] = _finish(name, (1 - f) * getattr(k, attr) + f * draw, ch)
        kernels[i] = replace(k, kernel_name=MINER_KERNEL, **vals)

    meta = replace(
        benign_trace.meta,
        onset_s=onset_s,
        description=(benign_trace.meta.description + f"; miner injected at {onset_s!r}s").lstrip("; "),
        rng=RNG_ALGORITHM,
    )
    return Trace(meta=meta, samples=samples, kernels=kernels, labels=labels)


def make_corpus(
    n_benign: int,
    n_mixed: int,
    base_config: ScenarioConfig | None = None,
    seed: int = 42,
) -> list[Trace]:
    """Benign-only traces first, then mixed traces with onsets drawn
    uniformly from the middle 60% of the scenario duration."""
    if n_benign < 0 or n_mixed < 0 or n_benign + n_mixed < 1:
        raise ValueError("corpus must contain at least one trace")
    base = base_config or ScenarioConfig()
    rng = np.random.default_rng(seed)
    seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=n_benign + n_mixed)]
    onsets = rng.uniform(0.2 * base.duration_s, 0.8 * base.duration_s, size=n_mixed)

    traces = []
    for i in range(n_benign):
        cfg = replace(base, miner_onset_s=None, seed=seeds[i], name=f"benign_{i:03d}")
        traces.append(simulate_trace(cfg))
    for i in range(n_mixed):
        cfg = replace(
            base,
            miner_onset_s=float(onsets[i]),
            seed=seeds[n_benign + i],
            name=f"mixed_{i:03d}",
        )
        traces.append(simulate_trace(cfg))
    return traces


# -- scenario config files ------------------------------------------------

def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "name":
        return raw
    if key == "seed":
        return int(raw)
    if key == "miner_onset_s" and raw.lower() in ("", "none", "null"):
        return None
    return float(raw)


def parse_scenario_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Read ``key = value`` lines over a base config.

    Top-level keys mirror :class:`ScenarioConfig`; regime channels are set
    with dotted keys such as ``miner.power.mean = 120``.
    """
    cfg = base or ScenarioConfig()
    top = {f.name for f in fields(ScenarioConfig)} - {"benign", "miner"}
    regimes = {"benign": cfg.benign, "miner": cfg.miner}
    updates = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"expected key = value at line {n}")
        try:
            if key in top:
                updates[key] = _parse_value(key, value)
                continue
            parts = key.split(".")
            if len(parts) != 3 or parts[0] not in regimes or parts[1] not in CHANNELS \
                    or parts[2] not in ("mean", "std", "lo", "hi"):
                raise ValueError(f"unknown key {key!r}")
            regime, channel, attr = parts
            ch = replace(regimes[regime].channel(channel), **{attr: float(value)})
            regimes[regime] = replace(regimes[regime], **{channel: ch})
        except ValueError as exc:
            raise ValueError(f"{exc} at line {n}") from None
    return replace(cfg, benign=regimes["benign"], miner=regimes["miner"], **updates)
