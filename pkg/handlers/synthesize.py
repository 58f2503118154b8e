"""
synthesize – score + checkpoint → WAV (and optionally the feature matrix).
"""

import argparse
import logging

import config
from core.checkpoint import load_checkpoint
from core.score import load_score
from core.settings import load_run_config
from core.synthesizer import synthesize
from handlers.base import emit, env_defaults
from ui.formatters import fmt_synthesis

log = logging.getLogger("Handlers.Synthesize")


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("synthesize", help="render a score to a WAV file")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--score", required=True, help="score JSON")
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--dump-features", default=None, help="also write the generated feature matrix here")
    p.add_argument("--config", default=None, help="run configuration JSON (synthesis section is used)")
    p.add_argument("--segment-frames", type=int, default=None, help="generation segment length")
    p.add_argument("--workers", type=int, default=None, help=f"concurrent segments (default: {config.SYNTH_WORKERS})")
    p.set_defaults(func=handle)


def handle(args) -> int:
    synth_cfg = load_run_config(args.config, env_defaults()).synthesis
    ckpt = load_checkpoint(args.ckpt)
    score = load_score(args.score)
    result = synthesize(
        ckpt, score, args.out,
        synth_cfg=synth_cfg,
        dump_features=args.dump_features,
        workers=args.workers or config.SYNTH_WORKERS,
        max_frames=config.MAX_SCORE_FRAMES,
        segment_frames=args.segment_frames,
    )
    emit(fmt_synthesis(result))
    return 0
