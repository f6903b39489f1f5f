"""Command-line entry point: python cli.py <command> --run-dir DIR [options]."""

import argparse
import logging
import sys

import config
from commands import COMMANDS
from utils.errors import DistillError

logger = logging.getLogger('cli')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cli.py',
        description='Desk-scale dataset distillation with universal feature compensators.',
    )
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True
    for register in COMMANDS:
        register(subparsers)
    return parser


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format=config.LOG_FORMAT, force=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except DistillError as e:
        logger.error("%s", e)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
