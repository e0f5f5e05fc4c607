"""Command-line entry point: ``recon <experiment> --config <path> [--full] [--out <dir>]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import CalibrationError, ConfigError
from .harness import ExperimentConfig, run_experiment, write_outputs

EXIT_OK = 0
EXIT_ACCEPTANCE = 2
EXIT_CALIBRATION = 3

COMMANDS = {
    "fig3": "fig3",
    "fig5": "fig5",
    "theorem1": "theorem1",
    "noise": "noise_sweep",
    "prop4": "prop4_check",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recon", description="Run a reconstruction experiment.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value experiment config")
    p.add_argument("--full", action="store_true",
                   help="use the config's full_trials instead of trials")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--workers", type=int, default=None, help="override the worker count")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cfg.experiment != COMMANDS[args.command]:
        print(f"error: config is for {cfg.experiment!r}, command is {args.command!r}",
              file=sys.stderr)
        return 1
    if args.full:
        if "full_trials" not in cfg.params:
            print(f"error: {cfg.experiment} has no full_trials setting", file=sys.stderr)
            return 1
        cfg = cfg.with_params(trials=cfg["full_trials"])
    if args.workers is not None:
        cfg = cfg.with_params(workers=args.workers)
    try:
        result = run_experiment(cfg)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    csv_path, json_path = write_outputs(result, args.out)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK if result.passed else EXIT_ACCEPTANCE


if __name__ == "__main__":
    sys.exit(main())
