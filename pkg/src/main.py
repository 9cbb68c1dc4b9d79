#!/usr/bin/env python3
"""
Fractional Ornstein-Uhlenbeck Toolkit - CLI Entry Point
=======================================================
Batch commands for fractional hypoelliptic Ornstein-Uhlenbeck semigroups:
- Kalman structure and characteristic exponents
- Spectral propagation on periodic grids
- Smoothing, Gevrey and dissipation scans
- Thick-set geometry, observability and penalized HUM control
"""

import argparse
import logging
import sys

import yaml

from .config import ConfigLoader
from .errors import ConfigError, FouError
from .models import ExitCode, RunStats
from .runner import COMMANDS, Runner
from .utils import print_dry_run_info, setup_logging
from .writers import ReportWriter


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Fractional Ornstein-Uhlenbeck Toolkit - semigroup, regularity and control diagnostics'
    )
    parser.add_argument(
        'command',
        choices=COMMANDS,
        help='Command to run'
    )
    parser.add_argument(
        '-c', '--config',
        default=None,
        help='Path to configuration file (YAML or JSON); defaults apply when omitted'
    )
    parser.add_argument(
        '-o', '--out',
        help='Output directory (overrides output.directory)'
    )
    parser.add_argument(
        '--threads',
        type=int,
        help='Worker threads forwarded to scipy.fft'
    )
    parser.add_argument(
        '--seed',
        type=int,
        help='Random seed (overrides the seed key)'
    )
    parser.add_argument(
        '--set',
        dest='overrides',
        action='append',
        default=[],
        metavar='KEY=VAL',
        help='Override a configuration value, e.g. --set model.s=0.75 (repeatable)'
    )
    parser.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Enable verbose output'
    )
    parser.add_argument(
        '--dry-run',
        action='store_true',
        help='Validate the configuration and show what would be computed'
    )
    return parser


def write_failure_manifest(args: argparse.Namespace, code: str, message: str) -> None:
    """Manifest for a run that stopped before its configuration loaded; needs --out."""
    if not args.out:
        return
    stats = RunStats(command=args.command)
    stats.errors.append({'code': code, 'message': message})
    try:
        ReportWriter({'directory': args.out}).write_manifest(stats, {}, args.seed or 0)
    except FouError as e:
        print(f"Error [{e.code}]: {e}")


def main(argv=None):
    """Main entry point."""
    args = build_parser().parse_args(argv)

    # Load configuration
    try:
        config = ConfigLoader(args.config, args.overrides)
    except FileNotFoundError:
        print(f"Error: Configuration file '{args.config}' not found")
        write_failure_manifest(args, 'IO', f"Configuration file '{args.config}' not found")
        sys.exit(ExitCode.ERROR)
    except yaml.YAMLError as e:
        print(f"Error: Invalid YAML in configuration file: {e}")
        write_failure_manifest(args, ConfigError.code, f"Invalid YAML: {e}")
        sys.exit(ExitCode.ERROR)
    except FouError as e:
        print(f"Error [{e.code}]: {e}")
        write_failure_manifest(args, e.code, str(e))
        sys.exit(ExitCode.ERROR)

    # Setup logging
    log_settings = config.get_logging_settings()
    if args.verbose:
        log_settings['level'] = 'DEBUG'
    setup_logging(log_settings)

    # Dry run mode
    if args.dry_run:
        logging.info("DRY RUN MODE - Nothing will be computed")
        settings = config.to_dict()
        if args.out:
            settings.setdefault('output', {})['directory'] = args.out
        print_dry_run_info(args.command, settings)
        sys.exit(ExitCode.OK)

    runner = Runner(config, out_dir=args.out, seed=args.seed, threads=args.threads)
    stats = runner.run(args.command)

    # Print summary
    logging.info("=" * 50)
    logging.info(f"COMMAND COMPLETE: {args.command}")
    for verdict in stats.verdicts:
        logging.info(f"  {verdict.name}: {'PASS' if verdict.passed else 'FAIL'} {verdict.detail}".rstrip())
    logging.info(f"Artifacts: {len(stats.artifacts)} in {runner.writer.directory}")

    if stats.errors:
        logging.warning(f"Errors: {len(stats.errors)}")
        for err in stats.errors:
            logging.warning(f"  - [{err['code']}] {err['message']}")
    sys.exit(stats.exit_code)


if __name__ == '__main__':
    main()
