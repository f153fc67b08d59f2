"""Command-line entry point: ``conical-ke {pipeline,continuity,energies,oracle-check}``.

Exit codes: 0 all criteria pass, 1 a criterion fails, 2 configuration
error, 3 solver failure (the failing stage is printed and written to the
summary).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .experiments import COMMANDS, SolverFailure, provenance

EXIT_PASS, EXIT_CRITERION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conical-ke", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="JSON experiment configuration")
    parser.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="seed for random potential families")
    return parser


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(seed=args.seed, output_dir=str(args.out) if args.out else None)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(config.output_dir)
    try:
        report = COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure in {exc.stage}: {exc.cause}", file=sys.stderr)
        out.mkdir(parents=True, exist_ok=True)
        failure = {"command": args.command, "passed": False,
                   "failure": {"stage": exc.stage, "message": str(exc.cause), "last_t": exc.last_t},
                   "provenance": provenance(config, args.command)}
        (out / "summary.json").write_text(json.dumps(failure, indent=2, sort_keys=True) + "\n")
        return EXIT_SOLVER
    report.write(out)
    for name, ok in report.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_PASS if report.passed else EXIT_CRITERION


if __name__ == "__main__":
    sys.exit(main())
