"""
Command-line wiring: argparse subcommands and dispatch(argv) -> exit code
"""
import argparse
import os
import sys
from typing import List, Optional

sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'scripts'))
from commands import EXIT_USAGE, CommandError
from commands import ablate, classify, embed, generate, spectral, sweep, train, verify

COMMANDS = (generate, train, embed, spectral, verify, classify, sweep, ablate)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hifinet",
        description="Road-network representation learning with hierarchical frequency decomposition",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv and run one command

    Returns:
        0 on success, 1 when a verification or numeric check fails,
        2 for usage, configuration and input errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    try:
        return args.handler(args)
    except CommandError as e:
        print(f"❌ {e.detail}", file=sys.stderr)
        return e.exit_code
