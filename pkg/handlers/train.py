"""
train – fits a proposed or baseline model and writes its checkpoint.
"""

import argparse
import logging
from dataclasses import replace

import config
from core import run_log
from core.checkpoint import save_checkpoint
from core.corpus import resolve_corpus
from core.model import MODEL_KINDS
from core.settings import load_run_config
from core.trainer import train
from handlers.base import emit, env_defaults
from ui.formatters import fmt_train_summary

log = logging.getLogger("Handlers.Train")


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("train", help="train an acoustic model")
    p.add_argument("--corpus", required=True, help="corpus directory or synthetic:seed,n,frames")
    p.add_argument("--config", default=None, help="run configuration JSON")
    p.add_argument("--mode", choices=MODEL_KINDS, default=None, help="overrides train.mode")
    p.add_argument("--epochs", type=int, default=None, help="overrides train.epochs")
    p.add_argument("--seed", type=int, default=None, help="overrides train.seed")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=handle)


def handle(args) -> int:
    cfg = load_run_config(args.config, env_defaults())
    overrides = {k: v for k, v in (("mode", args.mode), ("epochs", args.epochs), ("seed", args.seed)) if v is not None}
    train_cfg = replace(cfg.train, **overrides)

    corpus = resolve_corpus(args.corpus)
    run_log.configure(config.DATA_DIR)
    result = train(corpus, train_cfg, cfg.model, cfg.feature)
    path = save_checkpoint(result.checkpoint, args.out)
    run_log.log_event(f"{train_cfg.mode}:{corpus.provenance}", "saved", str(path))
    emit(fmt_train_summary(result, str(path)))
    return 0
