"""Command line entry point: ``brancher <experiment> --config FILE``."""
from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigInvalid, load
from .run import ResourceBudgetExceeded, run

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brancher",
                                 description="Monte Carlo experiments on branching interlacements.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--check", action="store_true",
                    help="evaluate acceptance thresholds; exit 1 if any fails")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None, help="override the master seed")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--recalibrate", action="store_true",
                    help="recompute the calibration record before running")
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        cfg = load(args.config, args.experiment)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigInvalid("seed must be nonnegative")
            cfg.seed = args.seed
        if args.workers is not None and args.workers < 1:
            raise ConfigInvalid("workers must be positive")
    except ConfigInvalid as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.recalibrate and cfg.d >= 5 and cfg.experiment != "embeddings":
        from ..capacity import calibration
        calibration(cfg.d, cfg.law, recalibrate=True, full=True)
    try:
        res = run(cfg, args.out, args.workers, check=True)
    except ResourceBudgetExceeded as e:
        print(f"budget exceeded: {e}; partial results in {e.result.csv_path}",
              file=sys.stderr)
        return EXIT_BUDGET
    print(f"wrote {res.csv_path} and {res.summary_path}")
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    if args.check and not res.passed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
