"""
Base handler utilities – the error wrapper every command runs inside,
environment defaults and small console helpers.
"""

import logging
import sys
import traceback

import config
from core.errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, SingerError

log = logging.getLogger("Handlers")


class CommandErrorHandler:
    """
    Wraps a command. Instead of a raw traceback, prints a one-line
    message to stderr, logs the traceback and returns the exit code.
    """

    _ERROR_MESSAGES = {
        "ConfigError": "Configuration problem",
        "ScoreFormatError": "Score file rejected",
        "FeatureError": "Cannot build features",
        "ShapeError": "Dimension mismatch",
        "CorpusError": "Corpus problem",
        "CheckpointError": "Checkpoint unreadable",
        "NumericalError": "Numerical failure",
        "IndefiniteMatrixError": "Generation system is not positive definite",
        "FilterOverflowError": "Vocoder filter overflowed",
        "SignalError": "Audio problem",
        "FileNotFoundError": "File not found",
        "PermissionError": "Permission denied",
    }

    def __call__(self, handler, args) -> int:
        try:
            result = handler(args)
            return EXIT_OK if result is None else int(result)
        except SingerError as e:
            error_type = type(e).__name__
            friendly = self._ERROR_MESSAGES.get(error_type, "Error")
            log.debug(f"Command error [{e.category}]: {e}\n{traceback.format_exc()}")
            print(f"error: {friendly}: {e}", file=sys.stderr)
            return e.exit_code
        except OSError as e:
            error_type = type(e).__name__
            friendly = self._ERROR_MESSAGES.get(error_type, "I/O error")
            log.debug(f"Command error [{error_type}]: {e}\n{traceback.format_exc()}")
            print(f"error: {friendly}: {e}", file=sys.stderr)
            return EXIT_DATA
        except Exception as e:
            error_type = type(e).__name__
            log.error(f"Unexpected error [{error_type}]: {e}\n{traceback.format_exc()}")
            print(f"error: unexpected {error_type}: {str(e)[:200]}", file=sys.stderr)
            return EXIT_USAGE


run_command = CommandErrorHandler()


def env_defaults() -> dict:
    """Defaults from config.py for fields the run config leaves unset."""
    return {"seed": config.SEED, "sample_rate": config.SAMPLE_RATE, "alpha": config.MEL_ALPHA}


def emit(text: str) -> None:
    print(text, flush=True)
