"""``gpu-sentinel`` command line.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 internal error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import (
    DISPLAY_NAMES,
    KINDS,
    REPORT_KINDS,
    ModelFormatError,
    TrainingError,
    default_hyperparams,
    evaluate,
    format_csv,
    format_table,
    load_model,
    save_model,
    split,
    train,
)
from .detector import (
    DEFAULT_DEBOUNCE,
    AlertSink,
    RuleThresholds,
    StreamError,
    replay,
    stream_detect,
    stream_rule_detect,
    tail_file,
)
from .features import (
    DEFAULT_STRIDE,
    DEFAULT_WIDTH,
    Dataset,
    WindowSpec,
    build_dataset,
    load_dataset,
    save_dataset,
)
from .ingest import ParseError, load_canonical, load_trace, save_trace
from .report import charts, summarize, summary_csv, summary_table
from .simulator import ScenarioConfig, make_corpus, parse_scenario_config, simulate_trace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
SEED_ENV = "GPU_SENTINEL_SEED"
TRACE_SUFFIX = ".trace"

log = logging.getLogger("gpu_sentinel")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 42
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _thresholds(text: str) -> RuleThresholds:
    try:
        return RuleThresholds.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # flags whose help already explains the fallback, or that have no default
    def _get_help_string(self, action):
        text = action.help or ""
        if action.default is None or "(default" in text:
            return text
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = _Parser(prog="gpu-sentinel", formatter_class=fmt,
                     description="Detect cryptominer activity in GPU telemetry.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seed_arg(p):
        p.add_argument("--seed", type=int, default=None,
                       help=f"random seed (default: ${SEED_ENV}, else 42)")

    def window_args(p, default_width=DEFAULT_WIDTH, default_stride=DEFAULT_STRIDE):
        from_model = "" if default_width else " (default: as trained)"
        p.add_argument("--window-width", type=_positive_int, default=default_width,
                       help="samples per feature window" + from_model)
        p.add_argument("--window-stride", type=_positive_int, default=default_stride,
                       help="samples between window starts" + from_model)

    p = sub.add_parser("simulate", formatter_class=fmt, help="generate synthetic traces",
                       description="Write a corpus of simulated traces as canonical files.")
    p.add_argument("--benign", type=int, default=10, help="number of benign-only traces")
    p.add_argument("--mixed", type=int, default=10, help="number of traces with a miner onset")
    p.add_argument("--duration", type=float, default=None,
                   help="scenario length in seconds (default: 600, or the --config value)")
    p.add_argument("--interval", type=float, default=None,
                   help="sampling interval in seconds (default: 1, or the --config value)")
    p.add_argument("--onset", type=float, default=None,
                   help="fixed miner onset in seconds for mixed traces "
                        "(default: uniform in the middle 60%% of the duration)")
    p.add_argument("--ramp", type=float, default=None,
                   help="miner ramp-in length in seconds (default: 5, or the --config value)")
    p.add_argument("--config", type=Path, default=None,
                   help="key = value scenario config file (default: built-in scenario)")
    p.add_argument("--out", type=Path, default=Path("traces"), help="output directory")
    seed_arg(p)

    p = sub.add_parser("ingest", formatter_class=fmt, help="convert raw logs to a trace file",
                       description="Parse sampler / kernel / FPS logs into a canonical trace.")
    p.add_argument("--sampler", type=Path, required=True, help="device-sampler CSV log")
    p.add_argument("--kernels", type=Path, default=None,
                   help="kernel-profiler CSV export (default: none)")
    p.add_argument("--fps", type=Path, default=None, help="application FPS log (default: none)")
    p.add_argument("--labels", type=Path, default=None,
                   help="one 0/1 label per sampler line (default: all 0)")
    p.add_argument("--interval", type=float, default=None,
                   help="sampling interval in seconds (default: median sample spacing)")
    p.add_argument("--out", type=Path, required=True, help="canonical trace file to write")

    p = sub.add_parser("featurize", formatter_class=fmt, help="export windowed features as CSV",
                       description="Build a labeled feature dataset from traces.")
    p.add_argument("inputs", nargs="+", type=Path, help="trace files or directories")
    window_args(p)
    p.add_argument("--out", type=Path, required=True, help="dataset CSV to write")

    p = sub.add_parser("train", formatter_class=fmt, help="train and score classifiers",
                       description="Split, train, write model files and print metrics.")
    p.add_argument("inputs", nargs="+", type=Path,
                   help="trace files, directories of traces, or one dataset CSV")
    p.add_argument("--model", choices=KINDS + ("all",), default="all",
                   help="model kind; 'all' trains forest, gbm, logreg and mlp")
    p.add_argument("--test-fraction", type=float, default=0.3, help="held-out fraction")
    p.add_argument("--hyper", action="append", default=[], metavar="KEY=VALUE",
                   help="hyperparameter override, repeatable (e.g. epochs=1000)")
    window_args(p)
    p.add_argument("--out", type=Path, default=Path("models"), help="output directory")
    seed_arg(p)

    p = sub.add_parser("eval", formatter_class=fmt, help="score a model on labeled traces",
                       description="Evaluate a saved model on every window of the inputs.")
    p.add_argument("--model", type=Path, required=True, help="model file")
    p.add_argument("inputs", nargs="+", type=Path, help="trace files, directories or dataset CSV")
    window_args(p, None, None)
    p.add_argument("--out", type=Path, default=None,
                   help="metrics CSV to write (default: print only)")

    p = sub.add_parser("detect", formatter_class=fmt, help="raise alerts on a trace or live log",
                       description="Replay a trace, or follow a growing sampler log, "
                                   "and write alert records as JSON lines.")
    p.add_argument("input", type=Path,
                   help="canonical trace file, or sampler CSV log with --follow")
    p.add_argument("--model", type=Path, default=None,
                   help="model file (default: none; required unless --rules)")
    p.add_argument("--rules", action="store_true", help="use the rule baseline instead of a model")
    p.add_argument("--thresholds", type=_thresholds, default="95,85,60",
                   metavar="UTIL,POWER,SUSTAIN",
                   help="rule thresholds: min util %%, min power W, sustain s")
    p.add_argument("--debounce", type=_positive_int, default=DEFAULT_DEBOUNCE,
                   help="consecutive positive windows needed to alert")
    window_args(p, None, None)
    p.add_argument("--interval", type=float, default=None,
                   help="sampling interval in seconds (default: trace metadata, or 1)")
    p.add_argument("--follow", action="store_true", help="tail a growing sampler log")
    p.add_argument("--poll-interval", type=float, default=0.5, help="seconds between polls")
    p.add_argument("--grace", type=float, default=10.0,
                   help="seconds to wait for a followed file to appear")
    p.add_argument("--idle-timeout", type=float, default=None,
                   help="stop following after this many seconds without new data "
                        "(default: follow until interrupted)")
    p.add_argument("--verdicts", type=Path, default=None,
                   help="also write every verdict as CSV (default: none)")
    p.add_argument("--out", type=Path, default=None, help="alert file (default: stdout)")

    p = sub.add_parser("report", formatter_class=fmt, help="summarize regimes and draw charts",
                       description="With one mixed trace, compare its benign and miner parts; "
                                   "with two traces, compare the first against the second.")
    p.add_argument("inputs", nargs="+", type=Path, help="mixed trace, or benign and miner traces")
    p.add_argument("--out", type=Path, default=Path("report"), help="output directory")
    return parser


# -- helpers --------------------------------------------------------------

def _seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _trace_paths(inputs) -> list[Path]:
    paths = []
    for p in inputs:
        if p.is_dir():
            found = sorted(p.glob(f"*{TRACE_SUFFIX}"))
            if not found:
                raise ValueError(f"no {TRACE_SUFFIX} files in {p}")
            paths.extend(found)
        elif p.exists():
            paths.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return paths


def _load_inputs(inputs, spec: WindowSpec) -> Dataset:
    if len(inputs) == 1 and inputs[0].suffix == ".csv":
        return load_dataset(inputs[0])
    traces = [load_canonical(p) for p in _trace_paths(inputs)]
    return build_dataset(traces, spec)


def _spec(args, model=None) -> WindowSpec:
    """Window spec for eval/detect: flags win, the model's training spec fills gaps."""
    meta = model.training_meta if model is not None else {}
    trained = meta.get("window_width")
    if trained is not None and args.window_width is not None and args.window_width != trained:
        raise ValueError(f"model was trained on {trained}-sample windows, "
                         f"not --window-width {args.window_width}")
    width = args.window_width or trained or DEFAULT_WIDTH
    stride = args.window_stride or meta.get("window_stride", DEFAULT_STRIDE)
    return WindowSpec(width, stride)


def _hyper(kind: str, overrides: list[str]):
    hyper = default_hyperparams(kind)
    fields_ = vars(hyper)
    changes = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--hyper expects KEY=VALUE, got {item!r}")
        if key not in fields_:
            continue
        current = fields_[key]
        if isinstance(current, bool):
            changes[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, tuple):
            changes[key] = tuple(int(v) for v in raw.split(","))
        elif isinstance(current, int) or current is None:
            changes[key] = int(raw)
        else:
            changes[key] = float(raw)
    return replace(hyper, **changes)


# -- subcommands ----------------------------------------------------------

def cmd_simulate(args) -> int:
    base = ScenarioConfig()
    if args.config is not None:
        base = parse_scenario_config(args.config.read_text(encoding="utf-8"), base)
    overrides = {}
    if args.duration is not None:
        overrides["duration_s"] = args.duration
    if args.interval is not None:
        overrides["interval_s"] = args.interval
    if args.ramp is not None:
        overrides["ramp_s"] = args.ramp
    base = replace(base, **overrides)
    seed = _seed(args)
    if args.benign < 0 or args.mixed < 0:
        raise UsageError("--benign and --mixed must be >= 0")

    traces = make_corpus(args.benign, args.mixed, base, seed)
    if args.onset is not None:
        # same per-trace seeds as the drawn-onset corpus, only the onset is pinned
        traces = [
            tr if tr.meta.onset_s is None else simulate_trace(replace(
                base, miner_onset_s=args.onset, seed=tr.meta.seed, name=tr.meta.scenario_id))
            for tr in traces
        ]

    args.out.mkdir(parents=True, exist_ok=True)
    print(f"{'trace':<12} {'samples':>7} {'duration_s':>10} {'onset_s':>9} "
          f"{'miner_frac':>10} {'fps_pre':>8} {'fps_post':>8} {'fps_delta':>9}")
    for tr in traces:
        save_trace(tr, args.out / f"{tr.meta.scenario_id}{TRACE_SUFFIX}")
        n = len(tr.samples)
        miner = sum(tr.labels)
        pre = [s.fps for s, lab in zip(tr.samples, tr.labels) if lab == 0 and s.fps is not None]
        post = [s.fps for s, lab in zip(tr.samples, tr.labels) if lab == 1 and s.fps is not None]
        fps_pre = float(np.mean(pre)) if pre else float("nan")
        fps_post = float(np.mean(post)) if post else float("nan")
        delta = 100 * (fps_post - fps_pre) / fps_pre if pre and post else float("nan")
        onset = "-" if tr.meta.onset_s is None else f"{tr.meta.onset_s:.2f}"
        print(f"{tr.meta.scenario_id:<12} {n:>7} {n * tr.meta.interval_s:>10.1f} {onset:>9} "
              f"{miner / n:>10.3f} {fps_pre:>8.2f} {fps_post:>8.2f} "
              + (f"{delta:>+8.2f}%" if post and pre else f"{'-':>9}"))
    return EXIT_OK


def cmd_ingest(args) -> int:
    trace = load_trace(args.sampler, args.kernels, args.fps, args.labels,
                       interval_s=args.interval)
    save_trace(trace, args.out)
    print(f"{args.out}: {len(trace.samples)} samples, {len(trace.kernels)} kernel records, "
          f"{sum(s.fps is not None for s in trace.samples)} with fps")
    return EXIT_OK


def cmd_featurize(args) -> int:
    spec = WindowSpec(args.window_width, args.window_stride)
    ds = _load_inputs(args.inputs, spec)
    save_dataset(ds, args.out)
    print(f"{args.out}: {len(ds)} rows x {len(ds.feature_names)} features, "
          f"{int((ds.y == 1).sum())} miner / {int((ds.y == 0).sum())} benign")
    return EXIT_OK


def cmd_train(args) -> int:
    seed = _seed(args)
    spec = WindowSpec(args.window_width, args.window_stride)
    ds = _load_inputs(args.inputs, spec)
    train_ds, test_ds = split(ds, args.test_fraction, seed)
    kinds = REPORT_KINDS if args.model == "all" else (args.model,)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = {}
    for kind in kinds:
        t0 = time.perf_counter()
        model = train(kind, train_ds, _hyper(kind, args.hyper), seed)
        log.info("trained %s in %.2fs", kind, time.perf_counter() - t0)
        model.training_meta.setdefault("window_width", spec.width)
        model.training_meta.setdefault("window_stride", spec.stride)
        save_model(model, args.out / f"{kind}.model")
        rows[DISPLAY_NAMES[kind]] = evaluate(model, test_ds)
    (args.out / "metrics.csv").write_text(format_csv(rows), encoding="utf-8")
    print(f"train {len(train_ds)} rows, test {len(test_ds)} rows (seed {seed})")
    print(format_table(rows), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = _load_inputs(args.inputs, _spec(args, model))
    if tuple(ds.feature_names) != tuple(model.feature_names):
        raise ValueError("dataset features do not match the model's feature_names")
    rows = {DISPLAY_NAMES[model.kind]: evaluate(model, ds)}
    if args.out is not None:
        args.out.write_text(format_csv(rows), encoding="utf-8")
    print(format_table(rows), end="")
    return EXIT_OK


def cmd_detect(args) -> int:
    if not args.rules and args.model is None:
        raise UsageError("detect needs --model unless --rules is given")
    model = None if args.rules else load_model(args.model)
    spec = _spec(args, model)

    if args.follow:
        interval = args.interval or 1.0
        stream = tail_file(args.input, args.poll_interval, grace_s=args.grace,
                           idle_timeout=args.idle_timeout)
    else:
        trace = load_canonical(args.input)
        interval = args.interval or trace.meta.interval_s
        stream = replay(trace)

    def on_error(err: StreamError) -> None:
        print(f"warning: {err.message}", file=sys.stderr)

    if args.rules:
        results = stream_rule_detect(stream, args.thresholds, spec.stride, args.debounce,
                                     interval_s=interval, on_error=on_error)
    else:
        results = stream_detect(model, stream, spec, args.debounce,
                                interval_s=interval, on_error=on_error)

    out = args.out.open("w", encoding="utf-8") if args.out else sys.stdout
    vout = args.verdicts.open("w", encoding="utf-8") if args.verdicts else None
    n_windows = 0
    try:
        sink = AlertSink(out)
        if vout:
            vout.write("window_start,window_end,score,label,source\n")
        try:
            for verdict, alert in results:
                n_windows += 1
                if vout:
                    vout.write(f"{verdict.window_start_t!r},{verdict.window_end_t!r},"
                               f"{verdict.score!r},{verdict.label},{verdict.source}\n")
                if alert is not None:
                    sink.write(alert)
        except KeyboardInterrupt:
            pass
    finally:
        if args.out:
            out.close()
        if vout:
            vout.close()
    print(f"{n_windows} windows, {sink.count} alerts", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    if len(args.inputs) > 2:
        raise UsageError("report takes one mixed trace or two traces (benign, miner)")
    traces = [load_canonical(p) for p in args.inputs]
    rows = summarize(*traces)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.csv").write_text(summary_csv(rows), encoding="utf-8")
    for name, svg in charts(*traces).items():
        (args.out / name).write_text(svg, encoding="utf-8")
    print(summary_table(rows), end="")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "detect": cmd_detect,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"gpu-sentinel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ParseError, ModelFormatError, TrainingError, OSError) as exc:
        print(f"gpu-sentinel: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"gpu-sentinel: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
