"""
make-corpus – writes a deterministic synthetic corpus directory.
"""

import argparse
import logging

import config
from core.corpus import save_corpus
from core.errors import ConfigError
from core.synthetic import make_synthetic_corpus
from handlers.base import emit
from ui.formatters import fmt_corpus

log = logging.getLogger("Handlers.Corpus")


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("make-corpus", help="write a synthetic training corpus")
    p.add_argument("--seed", type=int, default=None, help=f"generator seed (default: SEED={config.SEED})")
    p.add_argument("--songs", type=int, default=2, help="number of songs")
    p.add_argument("--frames", type=int, default=1200, help="frames per song")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=handle)


def handle(args) -> int:
    if args.songs < 1 or args.frames < 1:
        raise ConfigError("--songs and --frames must be positive")
    seed = config.SEED if args.seed is None else args.seed
    corpus = make_synthetic_corpus(seed, args.songs, args.frames)
    path = save_corpus(corpus, args.out)
    emit(fmt_corpus(corpus, str(path)))
    return 0
