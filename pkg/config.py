"""
Configuration – reads from environment variables or .env file.

All optional:
  LOG_LEVEL          – Logging level: DEBUG | INFO | WARNING | ERROR (default: INFO)
  DATA_DIR           – Directory for run logs (default: data)
  SEED               – Default seed for corpus generation and training (default: 1234)
  SAMPLE_RATE        – Vocoder sample rate in Hz (default: 48000)
  MEL_ALPHA          – Frequency warping factor (default: picked from SAMPLE_RATE)
  SYNTH_WORKERS      – Concurrent segment forward passes during synthesis (default: 4)
  MAX_SCORE_FRAMES   – Longest score synthesize accepts, in frames (default: 360000)
"""

import os
import logging

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

log = logging.getLogger("Config")


def _optional_int(key: str, default: int | None = None) -> int | None:
    raw = os.environ.get(key, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        log.warning(f"Config: {key}='{raw}' is not a valid integer, using default {default}")
        return default


def _optional_float(key: str, default: float | None = None) -> float | None:
    raw = os.environ.get(key, "").strip()
    if not raw:
        return default
    try:
        return float(raw)
    except ValueError:
        log.warning(f"Config: {key}='{raw}' is not a valid number, using default {default}")
        return default


def _optional_str(key: str, default: str = "") -> str:
    return os.environ.get(key, default).strip() or default


def _valid_log_level(level: str) -> str:
    if level.upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
        log.warning(f"Config: LOG_LEVEL='{level}' is invalid, defaulting to INFO")
        return "INFO"
    return level.upper()


# ─── Logging / paths ──────────────────────────────────────────────────────────

LOG_LEVEL: str = _valid_log_level(_optional_str("LOG_LEVEL", "INFO"))
DATA_DIR: str = _optional_str("DATA_DIR", "data")

# ─── Numerics ─────────────────────────────────────────────────────────────────

SEED: int = _optional_int("SEED", 1234)
SAMPLE_RATE: int = _optional_int("SAMPLE_RATE", 48000) or 48000
MEL_ALPHA: float | None = _optional_float("MEL_ALPHA", None)   # None → standard value for SAMPLE_RATE

# ─── Synthesis limits ─────────────────────────────────────────────────────────

SYNTH_WORKERS: int = max(1, _optional_int("SYNTH_WORKERS", 4) or 1)
MAX_SCORE_FRAMES: int = _optional_int("MAX_SCORE_FRAMES", 360_000) or 360_000
