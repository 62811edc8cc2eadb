"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) and then
asserts, so a failing criterion shows up both in the summary and as a red test.
"""
import time
from fractions import Fraction

import numpy as np
import pytest

from gpu_sentinel.classifiers import (
    DISPLAY_NAMES,
    REPORT_KINDS,
    ForestParams,
    TreeParams,
    evaluate,
    metrics_from_counts,
    mlp_loss_and_grads,
    predict_score,
    split,
    train,
    train_forest,
    train_tree,
)
from gpu_sentinel.classifiers.models import init_mlp
from gpu_sentinel.classifiers.tree import LEAF
from gpu_sentinel.cli import main
from gpu_sentinel.detector import replay, stream_detect
from gpu_sentinel.features import WindowSpec, build_dataset, trace_features
from gpu_sentinel.ingest import (
    ParseError,
    dumps_trace,
    format_fps_log,
    format_kernel_csv,
    format_sampler_csv,
    load_trace,
    loads_trace,
    parse_fps_log,
    parse_kernel_csv,
    parse_labels,
    parse_sampler_csv,
)
from gpu_sentinel.simulator import ScenarioConfig, make_corpus, simulate_trace

from .helpers import FIXTURES, exhaustive_root_split, make_dataset, record

SPEC = WindowSpec(30, 10)


@pytest.fixture(scope="module")
def default_corpus():
    return make_corpus(10, 10, ScenarioConfig(), seed=42)


@pytest.fixture(scope="module")
def default_forest(default_corpus):
    return train_forest(build_dataset(default_corpus, SPEC), seed=42)


def mean_of(samples, name):
    return float(np.mean([getattr(s, name) for s in samples]))


def test_criterion_01_calibration():
    benign = simulate_trace(ScenarioConfig(seed=42))
    mixed = simulate_trace(ScenarioConfig(miner_onset_s=300.0, seed=42))
    post = [s for s, lab in zip(mixed.samples, mixed.labels) if lab == 1]
    b = {c: mean_of(benign.samples, c) for c in ("fps", "power", "gpu_util", "mem_used")}
    m = {c: mean_of(post, c) for c in ("fps", "gpu_util", "mem_used")}
    power = [s.power for s in post]
    checks = [
        len(benign.samples) == 600,
        25.2 <= b["fps"] <= 30.8,
        58.5 <= b["power"] <= 71.5,
        36 <= b["gpu_util"] <= 44,
        2520 <= b["mem_used"] <= 3080,
        12.6 <= m["fps"] <= 15.4,
        m["gpu_util"] >= 97,
        3510 <= m["mem_used"] <= 4290,
        min(power) >= 95 and max(power) <= 159,
    ]
    detail = (f"benign fps {b['fps']:.2f} power {b['power']:.2f} util {b['gpu_util']:.2f} "
              f"mem {b['mem_used']:.1f}; miner fps {m['fps']:.2f} util {m['gpu_util']:.2f} "
              f"mem {m['mem_used']:.1f} power [{min(power):.2f}, {max(power):.2f}]")
    record(1, all(checks), detail)
    assert all(checks), detail


def test_criterion_02_report_deltas(tmp_path):
    assert main(["simulate", "--benign", "0", "--mixed", "1", "--onset", "300",
                 "--out", str(tmp_path / "t")]) == 0
    assert main(["report", str(tmp_path / "t" / "mixed_000.trace"), "--out", str(tmp_path / "r")]) == 0
    rows = {}
    for line in (tmp_path / "r" / "summary.csv").read_text().splitlines()[1:]:
        channel, _, _, delta = line.split(",")
        rows[channel] = float(delta)
    ok = abs(rows["fps"] + 50) <= 5 and 30 <= rows["power"] <= 145
    detail = f"fps delta {rows['fps']:+.2f}%, power delta {rows['power']:+.2f}%"
    record(2, ok, detail)
    assert ok, detail


def test_criterion_03_model_accuracy(default_corpus):
    t0 = time.perf_counter()
    train_ds, test_ds = split(build_dataset(default_corpus, SPEC), 0.3, seed=42)
    results = {kind: evaluate(train(kind, train_ds, seed=42), test_ds) for kind in REPORT_KINDS}
    elapsed = time.perf_counter() - t0
    short = []
    for kind, m in results.items():
        for metric in ("accuracy", "precision", "recall", "f1"):
            if getattr(m, metric) < 0.99:
                short.append(f"{DISPLAY_NAMES[kind]} {metric} {100 * getattr(m, metric):.2f}%")
    ok = not short and elapsed < 60
    table = "; ".join(
        f"{kind} {100 * m.accuracy:.2f}/{100 * m.precision:.2f}/{100 * m.recall:.2f}/{100 * m.f1:.2f}"
        for kind, m in results.items()
    )
    detail = f"acc/prec/rec/f1 {table}; {elapsed:.1f}s" + (f"; below 99%: {', '.join(short)}" if short else "")
    record(3, ok, detail)
    assert ok, detail


def test_criterion_04_gradient_check():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(5, 4))
    y = np.array([1, 0, 1, 1, 0], dtype=float)
    params = [p + rng.normal(0, 0.1, p.shape) for p in init_mlp(4, (16, 8), rng)]
    _, grads = mlp_loss_and_grads(params, X, y)
    eps, worst = 1e-5, 0.0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            up = [q.copy() for q in params]
            down = [q.copy() for q in params]
            up[k][idx] += eps
            down[k][idx] -= eps
            numeric = (mlp_loss_and_grads(up, X, y)[0] - mlp_loss_and_grads(down, X, y)[0]) / (2 * eps)
            analytic = grads[k][idx]
            worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8))
    ok = worst < 1e-4
    record(4, ok, f"max relative error {worst:.2e} over {sum(p.size for p in params)} parameters")
    assert ok


def test_criterion_05_tree_split_oracle():
    rng = np.random.default_rng(5)
    hits = 0
    for _ in range(200):
        n, d = int(rng.integers(2, 13)), int(rng.integers(1, 4))
        X = rng.integers(0, 6, size=(n, d)).astype(float)
        y = rng.integers(0, 2, size=n)
        hyper = TreeParams()
        t = train_tree(make_dataset(X, y), hyper).params["trees"][0]
        got = None if t.feature[0] == LEAF else (int(t.feature[0]), float(t.threshold[0]))
        hits += got == exhaustive_root_split(X, y, hyper.min_samples_leaf)
    record(5, hits == 200, f"{hits}/200 root splits equal the exhaustive argmax")
    assert hits == 200


def test_criterion_06_metrics_identities():
    rng = np.random.default_rng(6)
    worst = 0.0
    checked = 0
    while checked < 1000:
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 50, size=4) * rng.integers(0, 2, size=4))
        if tp + fp + tn + fn == 0:
            continue
        m = metrics_from_counts(tp, fp, tn, fn)
        p = Fraction(tp, tp + fp) if tp + fp else Fraction(1)
        r = Fraction(tp, tp + fn) if tp + fn else Fraction(1)
        want = (Fraction(tp + tn, tp + fp + tn + fn), p, r, 2 * p * r / (p + r) if p + r else Fraction(0))
        got = (m.accuracy, m.precision, m.recall, m.f1)
        worst = max(worst, max(abs(g - float(w)) for g, w in zip(got, want)))
        checked += 1
    ok = worst <= 1e-12
    record(6, ok, f"1000 matrices, max deviation {worst:.1e}")
    assert ok


def test_criterion_07_online_offline(default_forest):
    identical = 0
    for seed in range(20):
        (trace,) = make_corpus(0, 1, ScenarioConfig(), seed=700 + seed)
        online = [(v.window_start_t, v.window_end_t, v.score)
                  for v, _ in stream_detect(default_forest, replay(trace), SPEC)]
        offline = [(f.window_start_t, f.window_end_t, predict_score(default_forest, f))
                   for f in trace_features(trace, SPEC)]
        identical += online == offline
    record(7, identical == 20, f"{identical}/20 traces with identical windows and scores")
    assert identical == 20


def test_criterion_08_latency(default_forest):
    latencies, benign_alerts = [], 0
    for seed in range(50):
        mixed = simulate_trace(ScenarioConfig(miner_onset_s=300.0, seed=8000 + seed))
        alerts = [a for _, a in stream_detect(default_forest, replay(mixed), SPEC, 3) if a]
        latencies.append(alerts[0].t_raised if alerts else float("inf"))
        benign = simulate_trace(ScenarioConfig(seed=9000 + seed))
        benign_alerts += sum(a is not None for _, a in stream_detect(default_forest, replay(benign), SPEC, 3))
    on_time = sum(t <= 360 for t in latencies)
    ok = on_time >= 0.95 * 50 and benign_alerts == 0
    finite = [t for t in latencies if np.isfinite(t)]
    detail = (f"{on_time}/50 first alerts at or before 360 s (median {np.median(finite):.0f} s, "
              f"max {max(finite):.0f} s); {benign_alerts} alerts on 50 benign runs")
    record(8, ok, detail)
    assert ok, detail


MALFORMED = {
    "sampler": parse_sampler_csv, "kernel": parse_kernel_csv, "fps": parse_fps_log,
    "labels": parse_labels, "canonical": loads_trace,
}


def test_criterion_09_parser_fixtures():
    problems = []
    for name, parse, fmt in (("sampler.csv", parse_sampler_csv, format_sampler_csv),
                             ("kernels.csv", parse_kernel_csv, format_kernel_csv),
                             ("fps.log", parse_fps_log, format_fps_log)):
        text = (FIXTURES / name).read_text()
        if fmt(parse(text)) != text:
            problems.append(f"{name} does not round-trip")
    malformed = sorted((FIXTURES / "malformed").iterdir())
    for path in malformed:
        try:
            MALFORMED[path.name.split("_")[0]](path.read_text())
            problems.append(f"{path.name} parsed without error")
        except ParseError as exc:
            if exc.line is None or f"line {exc.line}" not in str(exc):
                problems.append(f"{path.name} error lacks a line number")
    traces = [
        load_trace(FIXTURES / "sampler.csv", FIXTURES / "kernels.csv", FIXTURES / "fps.log",
                   FIXTURES / "labels.txt"),
        simulate_trace(ScenarioConfig(miner_onset_s=300.0)),
    ]
    for tr in traces:
        if loads_trace(dumps_trace(tr)) != tr:
            problems.append(f"canonical round-trip differs for {tr.meta.scenario_id}")
    ok = not problems
    record(9, ok, f"3 fixtures round-trip, {len(malformed)} malformed fixtures give line-numbered "
                  f"errors, {len(traces)} canonical round-trips" + (f"; {problems}" if problems else ""))
    assert ok, problems


def _pipeline(root):
    args = [
        ["simulate", "--seed", "42", "--out", str(root / "traces")],
        ["train", str(root / "traces"), "--model", "all", "--seed", "42", "--out", str(root / "models")],
        ["simulate", "--benign", "0", "--mixed", "1", "--onset", "300", "--seed", "42", "--out", str(root / "live")],
    ]
    for a in args:
        assert main(a) == 0
    for kind in REPORT_KINDS:
        assert main(["detect", str(root / "live" / "mixed_000.trace"), "--model",
                     str(root / "models" / f"{kind}.model"), "--out", str(root / f"alerts_{kind}.ndjson")]) == 0
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path):
    first = _pipeline(tmp_path / "run1")
    second = _pipeline(tmp_path / "run2")
    models = [k for k in first if k.suffix == ".model"]
    alerts = [k for k in first if k.suffix == ".ndjson"]
    differing = [str(k) for k in first if first[k] != second.get(k)]
    ok = first.keys() == second.keys() and not differing and len(models) == 4 and len(alerts) == 4
    n_alerts = sum(first[k].count(b"\n") for k in alerts)
    record(10, ok, f"{len(first)} files compared ({len(models)} models, {len(alerts)} alert logs with "
                   f"{n_alerts} alerts); {len(differing)} differ")
    assert ok, differing
