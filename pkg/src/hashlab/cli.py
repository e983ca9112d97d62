"""Command-line interface: run experiments, verify, calibrate, classify.

Exit codes: 0 success, 1 experiment/verification failure, 2 bad config.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import calibration, report as report_mod
from .errors import ConfigError, HashlabError
from .experiments import EXPERIMENTS, PRIMARY_METRIC, ExperimentConfig, run
from .growth import growth_classify
from .rng import stream
from .verify import verify_suite


def _ladder(text: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad ladder {text!r}: {e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hashlab",
        description="Adversarial low-independence hashing experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment over a size ladder")
    p_run.add_argument("--experiment", required=True, choices=EXPERIMENTS + ("verify",))
    p_run.add_argument("--ladder", type=_ladder, required=False,
                       help="comma-separated sizes (t for lp-*, n for ms-*, k for minwise-*)")
    p_run.add_argument("--trials", type=int, default=1000)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--load", type=float, default=None)
    p_run.add_argument("--k", type=int, default=5,
                       help="polynomial independence for lp-poly-k")
    p_run.add_argument("--out", default=None, help="output stem (default results/<experiment>)")
    p_run.add_argument("--cache-dir", default=None,
                       help=f"calibration cache dir (default ${calibration.CACHE_ENV_VAR})")
    p_run.add_argument("--calibration-samples", type=int, default=3000)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)

    p_ver = sub.add_parser("verify", help="run the self-check suite")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--quick", action="store_true")
    p_ver.add_argument("--calibration-cache", default=None,
                       help="validate this calibration cache file as well")

    p_cal = sub.add_parser("calibrate", help="build the 4-independent schedule for t")
    p_cal.add_argument("--t", type=int, required=True)
    p_cal.add_argument("--samples", type=int, default=3000)
    p_cal.add_argument("--seed", type=int, default=0)
    p_cal.add_argument("--cache-dir", default=None)

    p_cls = sub.add_parser("classify", help="growth-classify a results CSV")
    p_cls.add_argument("--csv", required=True)
    p_cls.add_argument("--metric", default=None)
    p_cls.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    if args.experiment == "verify":
        rep = verify_suite(seed=args.seed)
        for line in rep.lines():
            print(line)
        return 0 if rep.all_ok else 1
    if args.ladder is None:
        raise ConfigError("--ladder is required for measurement experiments")
    cfg = ExperimentConfig(
        experiment=args.experiment, ladder=args.ladder, trials=args.trials,
        seed=args.seed, load=args.load, k=args.k, out=args.out,
        cache_dir=args.cache_dir, calibration_samples=args.calibration_samples,
        workers=args.workers, plot=args.plot)
    rep, rows = run(cfg)
    stem = args.out or f"results/{args.experiment}"
    paths = report_mod.write_outputs(rep, rows, stem, plot=args.plot)
    for kind, path in sorted(paths.items()):
        print(f"{kind}: {path}")
    growth = rep.growth
    if "class" in growth:
        print(f"growth[{growth['metric']}]: {growth['class']} "
              f"(confidence {growth['class_confidence']:.2f})")
    return 0


def _cmd_verify(args) -> int:
    rep = verify_suite(seed=args.seed, calibration_path=args.calibration_cache,
                       quick=args.quick)
    for line in rep.lines():
        print(line)
    return 0 if rep.all_ok else 1


def _cmd_calibrate(args) -> int:
    cache_dir = args.cache_dir or calibration.default_cache_dir()
    schedule, payload = calibration.ensure_schedule(
        args.t, cache_dir=cache_dir, samples=args.samples, seed=args.seed)
    path = calibration.cache_path(cache_dir, args.t, args.seed, args.samples)
    print(f"cache: {path}")
    ok = True
    for entry in payload["entries"]:
        print(f"level {entry['level']}: p_t1={entry['p_t1']:.4f} "
              f"g={entry['g_estimate']:.3g} ci={entry['g_ci']} "
              f"converged={entry['converged']}")
        ok = ok and entry["converged"]
    return 0 if ok else 1


def _cmd_classify(args) -> int:
    rows = report_mod.read_csv(args.csv)
    experiment = rows[0][0] if rows else ""
    metric = args.metric or PRIMARY_METRIC.get(experiment)
    if metric is None:
        raise ConfigError("could not infer metric; pass --metric")
    sizes, values = report_mod.series_from_rows(rows, metric)
    if len(sizes) < 4:
        raise ConfigError("need at least 4 ladder points to classify")
    means = [float(np.mean(v)) for v in values]
    result = growth_classify(sizes, means, stream(args.seed, 0xC1, 0))
    print(f"{metric}: {result} (confidence {result.confidence:.2f})")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    handlers = {"run": _cmd_run, "verify": _cmd_verify,
                "calibrate": _cmd_calibrate, "classify": _cmd_classify}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except HashlabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
