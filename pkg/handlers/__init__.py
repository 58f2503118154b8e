"""
Handler package. Registers every command on the argument parser.
Each command module exposes register(subparsers), which binds its handle()
as the `func` default; dispatch() runs it inside the shared error handler.
"""

import argparse
import sys

from core.errors import EXIT_USAGE
from handlers import corpus, evaluate, synthesize, train
from handlers.base import run_command


class SingerArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the CLI contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    """Wire the command sub-parsers (order is the help order)."""
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=SingerArgumentParser)
    sub.required = True
    train.register(sub)
    synthesize.register(sub)
    evaluate.register(sub)
    corpus.register(sub)
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = SingerArgumentParser(
        prog="singer",
        description="Convolutional singing voice synthesis: train, synthesize, evaluate.",
    )
    return setup(parser)


def dispatch(args: argparse.Namespace) -> int:
    return run_command(args.func, args)
