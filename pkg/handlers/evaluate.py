"""
eval – per-dimension RMS and trajectory NLL of a checkpoint on a corpus.
"""

import argparse
import logging

import config
from core.checkpoint import load_checkpoint
from core.corpus import resolve_corpus
from core.evaluation import evaluate
from handlers.base import emit
from ui.formatters import fmt_eval_report

log = logging.getLogger("Handlers.Eval")


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("eval", help="score a checkpoint against a corpus")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--corpus", required=True, help="corpus directory or synthetic:seed,n,frames")
    p.add_argument("--segment-frames", type=int, default=None, help="generation segment length")
    p.add_argument("--by-part", action="store_true", help="summarize RMS per feature part instead of per dimension")
    p.set_defaults(func=handle)


def handle(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    corpus = resolve_corpus(args.corpus, ckpt.layout)
    report = evaluate(ckpt, corpus, segment_frames=args.segment_frames, workers=config.SYNTH_WORKERS)
    emit(fmt_eval_report(report, by_part=args.by_part))
    return 0
