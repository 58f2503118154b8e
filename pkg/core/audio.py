"""
Audio containers and codecs – waveform buffer, μ-law companding and
16-bit PCM WAV files.

WAV output is mono, little-endian 16-bit signed PCM with the canonical
44-byte header; samples are clipped to [−1, 1] and scaled by 32767.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import SignalError

log = logging.getLogger("Audio")

PCM_SCALE = 32767


@dataclass
class WaveformBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise SignalError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.sample_rate

    def clipped(self) -> "WaveformBuffer":
        over = int(np.count_nonzero(np.abs(self.samples) > 1.0))
        if over:
            log.warning(f"Clipping {over} sample(s) outside [-1, 1]")
        return WaveformBuffer(np.clip(self.samples, -1.0, 1.0), self.sample_rate)


# ─── μ-law ────────────────────────────────────────────────────────────────────

def mulaw_compand(x, mu: int = 255) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0):
        raise SignalError("μ-law input must lie in [-1, 1]")
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mulaw_encode(x, mu: int = 255, bits: int = 8) -> np.ndarray:
    """Companded value y ∈ [−1, 1] → code floor((y + 1)/2 · 2^bits), clipped."""
    levels = 2 ** bits
    y = mulaw_compand(x, mu)
    codes = np.floor((y + 1.0) / 2.0 * levels)
    return np.clip(codes, 0, levels - 1).astype(np.int64)


def mulaw_level(code, bits: int = 8) -> np.ndarray:
    """Companded value at the midpoint of a code's level."""
    levels = 2 ** bits
    code = np.asarray(code)
    if np.any(code < 0) or np.any(code >= levels):
        raise SignalError(f"μ-law code outside [0, {levels - 1}]")
    return (code + 0.5) / levels * 2.0 - 1.0


def mulaw_decode(code, mu: int = 255, bits: int = 8) -> np.ndarray:
    y = mulaw_level(code, bits)
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu


# ─── WAV ──────────────────────────────────────────────────────────────────────

def to_pcm16(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise SignalError("cannot write non-finite samples")
    return np.round(np.clip(samples, -1.0, 1.0) * PCM_SCALE).astype("<i2")


def write_wav(w: WaveformBuffer, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), int(w.sample_rate), to_pcm16(w.samples))
    log.info(f"Wrote {path} ({w.samples.shape[0]} samples, {w.duration_s:.2f}s @ {w.sample_rate} Hz)")
    return path


def read_wav(path: str | Path) -> WaveformBuffer:
    rate, data = wavfile.read(str(path))
    if data.dtype != np.int16:
        raise SignalError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    if data.ndim != 1:
        raise SignalError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    return WaveformBuffer(data.astype(np.float64) / PCM_SCALE, rate)
