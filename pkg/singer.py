"""
ConvSinger – convolutional singing voice synthesis at desk scale.

Commands:
  train        --corpus <dir|synthetic:seed,n,frames> --config <file> --mode <proposed|baseline> --out <ckpt>
  synthesize   --ckpt <file> --score <file> --out <wav> [--dump-features <file>]
  eval         --ckpt <file> --corpus <...>
  make-corpus  --seed <n> --songs <n> --frames <n> --out <dir>

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

Entry point. Run with: python singer.py <command> ...
"""

import logging
import sys

from config import LOG_LEVEL
import handlers

# ─── Logging ─────────────────────────────────────────────────────────────────

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
log = logging.getLogger("ConvSinger")


def main(argv: list[str] | None = None) -> int:
    parser = handlers.build_parser()
    args = parser.parse_args(argv)
    log.debug(f"Running '{args.command}'")
    return handlers.dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
