"""Command line entry point: ``dressrl {train,sweep,gradcheck,replay}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config

log = logging.getLogger("dressrl")


def _train(args) -> int:
    from .harness import run_training, smoothed_returns

    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if not (changes.get("out_dir") or cfg.out_dir):
        changes["out_dir"] = "runs/" + Path(args.config).stem
    cfg = cfg.with_(**changes).validate()
    result = run_training(cfg)
    _, sm = smoothed_returns(result.records)
    final = f"{sm[-1]:.4g}" if sm.size else "n/a"
    print(f"{len(result.records)} episodes, final smoothed return {final}, wrote {cfg.out_dir}")
    return 0


def _sweep(args) -> int:
    from .sweep import run_sweep

    cfg = load_config(args.config)
    out = args.out or cfg.out_dir or "runs/sweep"
    points = run_sweep(cfg, out)
    print(f"{len(points)} runs, aggregates in {out}/sweep_long.csv and {out}/sweep_summary.csv")
    return 0


def _gradcheck(args) -> int:
    from .gradcheck import run_suite, summarize

    summary = summarize(run_suite(range(args.seeds)))
    ok = True
    for name, (worst, tol, passed) in summary.items():
        print(f"{'PASS' if passed else 'FAIL'}  {name:<18} worst rel err {worst:.2e} (tol {tol:.0e})")
        ok &= passed
    return 0 if ok else 1


def _replay(args) -> int:
    from .replay import replay_trace

    report = replay_trace(args.trace)
    print(f"{report.rows} rows; max abs err {report.max_abs_error:.3e}; "
          f"max scaled err {report.max_scaled_error:.3e} at {report.worst_field or '-'}; "
          f"case mismatches {report.case_mismatches}")
    return 0 if report.ok(args.tol) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dressrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_train)

    p = sub.add_parser("sweep", help="run the beta x K x latency grid of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every loss")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=_gradcheck)

    p = sub.add_parser("replay", help="recompute environment math from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"dressrl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
