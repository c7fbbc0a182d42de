"""``vqsls`` command line: one subcommand per pipeline stage plus ``run-all``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, load_config
from .pipeline import MissingCheckpointError, Pipeline, StageError

EXIT_OK, EXIT_CONFIG, EXIT_PREREQ, EXIT_NUMERICAL = 0, 2, 3, 4

SUBCOMMANDS = ("surrogate", "hessian", "windows", "linesearch", "powell", "shots", "run-all")

log = logging.getLogger("vqsls")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqsls", description="Surrogate-Hessian line search for VQE.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--jobs", type=int, default=1, help="parallel energy evaluations")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    return parser


def _setup_logging():
    level = os.environ.get("VQSLS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _report(result) -> str:
    if hasattr(result, "to_dict"):
        result = {"iterations": len(result.iterations), "converged": result.converged,
                  "converged_iteration": result.converged_iteration, "total_calls": result.total_calls,
                  "final_params": result.final_center.tolist() if result.final_center is not None else None}
    return json.dumps(result, indent=1, default=str)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed})
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        pipe = Pipeline(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    stage = args.subcommand.replace("-", "_")
    try:
        result = getattr(pipe, stage)()
    except MissingCheckpointError as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except StageError as exc:
        if isinstance(exc.cause, FileNotFoundError):
            print(f"missing prerequisite: {exc}", file=sys.stderr)
            return EXIT_PREREQ
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(_report(result))
    if stage == "run_all" and not result["converged"]:
        print("line search did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
