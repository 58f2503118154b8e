"""
Run log: one line per training epoch in a rotating file, separate from
the console log.

Log format: timestamp | run | epoch | loss | details
"""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

_run = logging.getLogger("RunLog")
_run.setLevel(logging.INFO)
_run.propagate = False  # Don't spam the main log

_handler: RotatingFileHandler | None = None


def configure(data_dir: str | Path) -> Path:
    """Attach the rotating file handler under data_dir; later calls move it."""
    global _handler
    directory = Path(data_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "train.log"
    if _handler is not None:
        if Path(_handler.baseFilename) == path.resolve():
            return path
        _run.removeHandler(_handler)
        _handler.close()
    _handler = RotatingFileHandler(
        path,
        maxBytes=5 * 1024 * 1024,  # 5 MB
        backupCount=3,
        encoding="utf-8",
    )
    _handler.setFormatter(logging.Formatter("%(asctime)s | %(message)s", datefmt="%Y-%m-%d %H:%M:%S"))
    _run.addHandler(_handler)
    return path


def close() -> None:
    global _handler
    if _handler is not None:
        _run.removeHandler(_handler)
        _handler.close()
        _handler = None


def log_epoch(run: str, epoch: int, loss: float, details: str = ""):
    """Log one finished epoch."""
    _run.info(f"{run} | {epoch} | {loss:.6f} | {details}")


def log_event(run: str, event: str, details: str = ""):
    """Log a run milestone (start, checkpoint written, abort)."""
    _run.info(f"{run} | {event.upper()} | {details}")
