#!/usr/bin/env python3
"""
obscert command line.

Usage:
    obscert cert --config configs/cert.json --out out/cert
    obscert verify-obs --config configs/verify_obs.yaml --seed 7 --threads 4
    obscert counterexample --config configs/counterexample.json
    obscert control --config configs/control.json --no-db
    obscert health
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .base import ObscertError
from .error_tracking import capture_error, init_sentry
from .validator import COMMAND_SCHEMAS

logger = logging.getLogger("obscert")

COMMAND_HELP = {
    "cert": "Certify C_obs from abstract uncertainty and dissipation constants",
    "elliptic-cert": "Certify C_obs for an elliptic operator observed on a thick set",
    "verify-ur": "Fit uncertainty constants (d0, d1) from band-limited samples",
    "verify-diss": "Check the L2 dissipation estimate on the frequency grid",
    "verify-obs": "Measure empirical observability ratios against a certificate",
    "counterexample": "Hole-growing sweep: ratio blow-up on non-thick masks",
    "thickness": "Thickness parameter rho of a mask for window lengths L",
    "control": "Minimal-norm null control by conjugate gradient",
}


def cmd_experiment(args: argparse.Namespace) -> int:
    """Load, validate and run one experiment config."""
    from .experiment import ExperimentConfig, load_config, run_experiment
    from .storage import RunStore

    try:
        data = load_config(args.config)
        config = ExperimentConfig.from_mapping(data, args.command, args.seed, args.threads)
        out_dir = Path(args.out or Path("obscert-out") / args.command)
        store = None
        if not args.no_db:
            store = RunStore(args.db_path or out_dir / "runs.db")
    except ObscertError as exc:
        capture_error(exc, context={"command": args.command, "config": str(args.config)})
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

    result = run_experiment(config, out_dir, store, progress=args.progress, print_summaries=True)
    if result.error is not None:
        print(f"error: {result.error}", file=sys.stderr)
        print(f"failure report: {result.out_dir / 'failure_report.json'}", file=sys.stderr)
    else:
        print(f"artifacts written to {result.out_dir}")
    return result.exit_code


def cmd_health(args: argparse.Namespace) -> int:
    from .health_check import check_system

    return 0 if check_system(verbose=args.verbose).healthy else 1


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="Experiment config (JSON or YAML)")
    parser.add_argument("--out", help="Output directory (default: obscert-out/<command>)")
    parser.add_argument("--seed", type=int, help="Master seed, overrides the config")
    parser.add_argument("--threads", type=int, help="Worker cap (fallback: $OBSCERT_THREADS, then 1)")
    parser.add_argument("--db-path", help="Run ledger database (default: <out>/runs.db)")
    parser.add_argument("--no-db", action="store_true", help="Do not record the run in the ledger")
    parser.add_argument("--no-sentry", action="store_true", help="Disable Sentry error tracking")
    parser.add_argument("--progress", action="store_true", help="Show progress bars")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obscert",
        description="Certified observability constants for elliptic semigroups",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exit codes:
  0 success, 2 invalid config or parameters, 3 hypothesis violation,
  4 non-convergence, 5 I/O failure

For more help on a specific command:
  obscert <command> --help
""",
    )
    subparsers = parser.add_subparsers(title="commands", dest="command")

    for command in COMMAND_SCHEMAS:
        sub = subparsers.add_parser(command, help=COMMAND_HELP[command], description=COMMAND_HELP[command])
        _add_experiment_arguments(sub)
        sub.set_defaults(func=cmd_experiment)

    health_parser = subparsers.add_parser(
        "health",
        help="Check dependencies",
        description="Report which packages are installed and what is lost without them",
    )
    health_parser.add_argument("-v", "--verbose", action="store_true", help="Show versions and details")
    health_parser.add_argument("--no-sentry", action="store_true", help=argparse.SUPPRESS)
    health_parser.set_defaults(func=cmd_health)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return 0

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if not args.no_sentry:
        init_sentry()
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
