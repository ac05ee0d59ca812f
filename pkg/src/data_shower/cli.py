"""
Command line entry point: `datashower <experiment> [--scenario FILE] [--seed N] [--runs N] [--out DIR]`.

Exit codes: 0 on success, 1 for usage or scenario errors, 2 for failures while running an experiment.
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

from loguru import logger

from data_shower.errors import DataShowerError, ScenarioError
from data_shower.experiments import EXPERIMENTS, run_experiment
from data_shower.scenario import (
    DEFAULT_SCENARIO,
    RawScenario,
    apply_override,
    parse_scenario,
    parse_sweep,
    read_raw_scenario,
    validate_scenario,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="datashower", description="Run data shower experiments and write their CSV results.")
    parser.add_argument("command", choices=[*EXPERIMENTS, "validate"], help="Experiment to run, or validate.")
    parser.add_argument(
        "--scenario", type=Path, default=None, help=f"Scenario TOML file (default: bundled {DEFAULT_SCENARIO})."
    )
    parser.add_argument("--seed", type=int, default=None, help="Master seed; overrides run.seed.")
    parser.add_argument("--runs", type=int, default=None, help="Monte Carlo runs; overrides run.runs.")
    parser.add_argument("--out", type=Path, default=None, help="Output directory; overrides run.out_dir.")
    parser.add_argument(
        "--sweep", default=None, help="Run once per value: PATH=V1,V2,... (e.g. bulk.thz_tx_power_dbm=0,20)."
    )
    parser.add_argument("--sweep-runs", type=int, default=None, help="Monte Carlo runs per sweep value.")
    parser.add_argument("--verbose", action="store_true", help="Log debug messages.")
    return parser


def configure_logging(verbose: bool = False) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")


def _validate(path: Path | None) -> int:
    diagnostics = validate_scenario(path)
    for diagnostic in diagnostics:
        print(diagnostic)
    if diagnostics:
        logger.error(f"{path or DEFAULT_SCENARIO}: {len(diagnostics)} problem(s)")
        return EXIT_USAGE
    logger.info(f"{path or DEFAULT_SCENARIO} is valid")
    return EXIT_OK


def _run(args: argparse.Namespace) -> int:
    raw, base_dir = read_raw_scenario(args.scenario)
    if args.seed is not None:
        raw = apply_override(raw, "run.seed", args.seed)
    if args.runs is not None:
        raw = apply_override(raw, "run.runs", args.runs)
    out_dir: Path | None = args.out

    variants: list[tuple[RawScenario, Path | None]] = [(raw, out_dir)]
    if args.sweep is not None:
        sweep = parse_sweep(args.sweep, args.sweep_runs)
        root = out_dir if out_dir is not None else Path(parse_scenario(raw, base_dir).run.out_dir)
        variants = []
        for value in sweep.values:
            variant = apply_override(raw, sweep.path, value)
            if sweep.runs is not None:
                variant = apply_override(variant, "run.runs", sweep.runs)
            variants.append((variant, root / f"{sweep.path}={value}"))
    elif args.sweep_runs is not None:
        raise ScenarioError("--sweep-runs needs --sweep")

    # validate every variant before running any of them
    scenarios = [(parse_scenario(variant, base_dir), target) for variant, target in variants]
    for scenario, target in scenarios:
        written = run_experiment(args.command, scenario, target)
        logger.info(f"{args.command}: wrote {len(written)} file(s)")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        if args.command == "validate":
            return _validate(args.scenario)
        return _run(args)
    except ScenarioError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (DataShowerError, ValueError) as e:
        logger.error(str(e))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
