#!/usr/bin/env python3
"""
Command-line interface for bellgen.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, Optional

from . import __version__
from .core.config import ExperimentConfig
from .core.exceptions import (
    BellgenError,
    ConfigError,
    DegenerateInputError,
    FileOperationError,
    FitError,
    PhaseRangeError,
    ReconstructionError,
    ValidationError,
)
from .core.io.json_handler import read_json, round_floats
from .core.runner import OUTPUT_FORMATS, ExperimentRunner

OUT_DIR_ENV = "BELLGEN_OUT_DIR"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMMANDS = ("generate", "tomography", "noon", "calibrate", "car-sweep", "list")

_cli_handler: Optional[logging.Handler] = None


def configure_logging(verbosity: int) -> None:
    """WARNING by default, INFO with -v, DEBUG with -vv; records go to stderr."""
    global _cli_handler
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    package_logger = logging.getLogger("bellgen")
    if _cli_handler is not None:
        package_logger.removeHandler(_cli_handler)
    _cli_handler = logging.StreamHandler(sys.stderr)
    _cli_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    package_logger.addHandler(_cli_handler)
    package_logger.setLevel(level)


def exit_code_for(error: BaseException) -> int:
    """Numerical failures exit with 3; configuration, validation and file errors with 2."""
    if isinstance(error, (DegenerateInputError, FitError, ReconstructionError, PhaseRangeError)):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def error_payload(error: BaseException) -> Dict[str, Any]:
    payload: Dict[str, Any] = {"error": type(error).__name__, "message": str(error)}
    if isinstance(error, ConfigError):
        payload["path"] = error.path
    if isinstance(error, ValidationError):
        payload["parameter"] = error.parameter
    if isinstance(error, (FitError, ReconstructionError)):
        payload["diagnostics"] = error.diagnostics
    if isinstance(error, FileOperationError) and error.filename:
        payload["file"] = error.filename
    return payload


def load_experiment(path: str, seed: Optional[int]) -> ExperimentConfig:
    """Read the config file; an explicit --seed replaces the file's seed before validation."""
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigError("$", "config file must contain a JSON object")
    if seed is not None:
        data = dict(data, seed=seed)
    return ExperimentConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Simulate reconfigurable dual-rail entangled-photon experiments",
        prog="bellgen",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Commands:
  generate      Ideal generated state, Bell decomposition and phases (state.json)
  tomography    Simulated 36-count tomography, MLE reconstruction and Monte Carlo
                uncertainties (tomography.json, records.json, summary.txt)
  noon          Two-photon fringe and visibility (noon.csv, noon.json)
  calibrate     Shifter calibration fit and voltage lookup
                (calibration.json, scan.csv, lookup.csv)
  car-sweep     Coincidence-to-accidental ratio versus pair rate
                (car_sweep.csv, car_sweep.json)
  list          Named targets with their derived phases

Exit codes: 0 success, 2 configuration/validation/file error, 3 numerical failure.
The output directory is --out, else $BELLGEN_OUT_DIR, else output.dir of the config.

Examples:
  bellgen generate --config phi_plus.json --explain
  bellgen tomography --config scenario.json --seed 7 --out runs/seed7 -v
  bellgen car-sweep --config scenario.json --format json
  bellgen list
        """,
    )
    parser.add_argument("--version", action="version", version=f"bellgen {__version__}")
    parser.add_argument("command", choices=COMMANDS, help="Pipeline to run")
    parser.add_argument("--config", help="Experiment config (JSON)")
    parser.add_argument("--seed", type=int, help="Override the config seed")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument(
        "--format", choices=OUTPUT_FORMATS, default="csv",
        help="csv: tables as CSV next to JSON reports; json: tables embedded in the JSON reports (default: csv)",
    )
    parser.add_argument("--explain", action="store_true",
                        help="Compare published and formula-derived settings of the named targets")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="Log progress (-v) or debugging detail (-vv) to stderr")
    return parser


def main(args: Optional[list] = None) -> int:
    """
    Main CLI entry point.

    Args:
        args: Command line arguments (for testing)

    Returns:
        Exit code (0 success, 2 config/validation error, 3 numerical failure)
    """
    parser = build_parser()
    if args is None:
        args = sys.argv[1:]
    parsed_args = parser.parse_args(args)
    configure_logging(parsed_args.verbose)

    try:
        config = None
        if parsed_args.config:
            config = load_experiment(parsed_args.config, parsed_args.seed)
        elif parsed_args.command != "list":
            raise ConfigError("config", f"--config is required for '{parsed_args.command}'")

        out_dir = parsed_args.out or os.environ.get(OUT_DIR_ENV) or None
        runner = ExperimentRunner()
        result = runner.run(
            parsed_args.command,
            config,
            out_dir=out_dir,
            fmt=parsed_args.format,
            explain=parsed_args.explain,
            show_progress=parsed_args.verbose > 0,
        )

        if result.summary:
            print(result.summary)
        for path in result.files:
            logging.getLogger(__name__).info("Wrote %s", path)
        return EXIT_OK

    except BellgenError as e:
        print(json.dumps(round_floats(error_payload(e)), sort_keys=True), file=sys.stderr)
        return exit_code_for(e)
    except KeyboardInterrupt:
        print(json.dumps({"error": "KeyboardInterrupt", "message": "Operation cancelled by user"}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
