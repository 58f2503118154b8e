"""
Vocoder – F0 reconstruction, vibrato, excitation and the MLSA filter.

Signal path for one utterance:
  log-F0 difference + note log-F0 + V/UV flag → F0 track (Hz, 0 = unvoiced)
  vibrato sections from the predicted vibrato parameters → modulated F0
  F0 → pulse train / white noise excitation (per-sample unit power)
  mel-cepstra → MLSA coefficients → Padé-approximated exp filter → waveform

The MLSA filter runs sample by sample with per-sample coefficients
interpolated linearly between frame centres. It is a plain Python loop over
float lists; expect roughly real time at 16 kHz for 25 coefficients.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .audio import WaveformBuffer
from .errors import ConfigError, FeatureError, FilterOverflowError, ShapeError
from .model import AcousticLayout

log = logging.getLogger("Vocoder")

F0_MIN_HZ = 20.0
F0_MAX_HZ = 2000.0

# 5th-order Padé coefficients of exp(w)
PADE5 = (1.0, 0.4999391, 0.1107098, 0.01369984, 0.0009564853, 0.00003041721)

OVERFLOW_LIMIT = 1e8

# Standard warping factors per sample rate
_ALPHA_BY_RATE = {
    8000: 0.31,
    16000: 0.42,
    22050: 0.466,
    44100: 0.544,
    48000: 0.55,
}


def standard_alpha(sample_rate: int) -> float:
    """Warping factor for a sample rate; nearest tabulated rate otherwise."""
    if sample_rate in _ALPHA_BY_RATE:
        return _ALPHA_BY_RATE[sample_rate]
    nearest = min(_ALPHA_BY_RATE, key=lambda r: abs(r - sample_rate))
    return _ALPHA_BY_RATE[nearest]


@dataclass
class SynthesisConfig:
    sample_rate: int = 48000
    alpha: float | None = None          # None → standard value for sample_rate
    gain: float = 1.0                   # applied before the final clip
    vuv_threshold: float = 0.5
    vibrato_min_cents: float = 1.0
    seed: int = 1234                    # noise excitation

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"synthesis.sample_rate must be positive, got {self.sample_rate}")
        if self.alpha is None:
            self.alpha = standard_alpha(self.sample_rate)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"synthesis.alpha must be in (0, 1), got {self.alpha}")

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            log.warning(f"SynthesisConfig: ignoring unknown keys {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


# ─── F0 ───────────────────────────────────────────────────────────────────────

@dataclass
class F0Track:
    hz: np.ndarray                # per frame, 0 = unvoiced
    frame_shift: float = 0.005

    @property
    def length(self) -> int:
        return self.hz.shape[0]

    @property
    def voiced(self) -> np.ndarray:
        return self.hz > 0


@dataclass
class VibratoSection:
    start: int                    # first frame
    end: int                      # last frame, inclusive
    amplitude: np.ndarray         # cents, one per frame of the section
    frequency: np.ndarray         # Hz, one per frame of the section

    def __post_init__(self):
        n = self.end - self.start + 1
        if self.start < 0 or n < 1:
            raise FeatureError(f"vibrato section [{self.start}, {self.end}] is empty or negative")
        self.amplitude = np.broadcast_to(np.asarray(self.amplitude, dtype=np.float64), (n,)).copy()
        self.frequency = np.broadcast_to(np.asarray(self.frequency, dtype=np.float64), (n,)).copy()
        if np.any(self.amplitude < 0):
            raise FeatureError("vibrato amplitude must be ≥ 0")


def reconstruct_logf0(
    predicted_diff: np.ndarray,
    note_logf0: np.ndarray,
    vuv_flag: np.ndarray,
    frame_shift: float = 0.005,
    threshold: float = 0.5,
) -> F0Track:
    """Voiced frames get exp(note + diff), clipped into [20, 2000] Hz."""
    predicted_diff = np.asarray(predicted_diff, dtype=np.float64)
    note_logf0 = np.asarray(note_logf0, dtype=np.float64)
    vuv_flag = np.asarray(vuv_flag, dtype=np.float64)
    if not (predicted_diff.shape == note_logf0.shape == vuv_flag.shape):
        raise ShapeError(
            f"F0 inputs differ in length: diff {predicted_diff.shape}, note {note_logf0.shape}, flag {vuv_flag.shape}"
        )
    hz = np.clip(np.exp(note_logf0 + predicted_diff), F0_MIN_HZ, F0_MAX_HZ)
    return F0Track(np.where(vuv_flag > threshold, hz, 0.0), frame_shift)


def vibrato_sections(
    amplitude: np.ndarray,
    frequency: np.ndarray,
    flag: np.ndarray,
    threshold: float = 0.5,
    min_cents: float = 1.0,
) -> list[VibratoSection]:
    """Maximal runs where the vibrato flag is set and the amplitude exceeds min_cents."""
    active = (np.asarray(flag) > threshold) & (np.asarray(amplitude) > min_cents)
    sections: list[VibratoSection] = []
    t, T = 0, active.shape[0]
    while t < T:
        if not active[t]:
            t += 1
            continue
        s = t
        while t < T and active[t]:
            t += 1
        sections.append(VibratoSection(s, t - 1, amplitude[s:t], frequency[s:t]))
    return sections


def vibrato_cents(section: VibratoSection, frame_shift: float) -> np.ndarray:
    """v(t) = m_a(t)·sin(2π·m_f(t)·frame_shift·(t − start)) over the section."""
    k = np.arange(section.end - section.start + 1)
    return section.amplitude * np.sin(2.0 * np.pi * section.frequency * frame_shift * k)


def apply_vibrato(f0: F0Track, sections: list[VibratoSection]) -> F0Track:
    hz = f0.hz.copy()
    ordered = sorted(sections, key=lambda s: s.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start <= prev.end:
            raise FeatureError(f"vibrato sections overlap at frames {cur.start}..{prev.end}")
    for sec in ordered:
        if sec.end >= f0.length:
            raise ShapeError(f"vibrato section ends at frame {sec.end}, track has {f0.length} frames")
        seg = hz[sec.start:sec.end + 1]
        factor = np.exp2(vibrato_cents(sec, f0.frame_shift) / 1200.0)
        hz[sec.start:sec.end + 1] = np.where(seg > 0, seg * factor, 0.0)
    return F0Track(hz, f0.frame_shift)


# ─── Excitation ───────────────────────────────────────────────────────────────

def frame_hop(sample_rate: int, frame_shift: float) -> int:
    hop = int(round(sample_rate * frame_shift))
    if hop < 1:
        raise ConfigError(f"frame shift {frame_shift}s is shorter than one sample at {sample_rate} Hz")
    return hop


def generate_excitation(f0: F0Track, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """
    Pulse train on voiced frames (amplitude sqrt(period), phase carried
    across frames), unit-variance Gaussian noise on unvoiced frames.
    """
    hop = frame_hop(sample_rate, f0.frame_shift)
    out = np.zeros(f0.length * hop)
    next_pulse = 0.0          # samples from the current frame start
    was_voiced = False
    for t, hz in enumerate(f0.hz):
        start = t * hop
        if hz <= 0:
            out[start:start + hop] = rng.standard_normal(hop)
            was_voiced = False
            continue
        period = sample_rate / hz
        if not was_voiced:
            next_pulse = 0.0
        amp = math.sqrt(period)
        while math.ceil(next_pulse) < hop:
            out[start + math.ceil(next_pulse)] = amp
            next_pulse += period
        next_pulse -= hop
        was_voiced = True
    return out


# ─── MLSA ─────────────────────────────────────────────────────────────────────

def mel_cepstrum_to_mlsa(c: np.ndarray, alpha: float) -> np.ndarray:
    """b(M) = c(M), b(m) = c(m) − α·b(m + 1), along the last axis."""
    c = np.asarray(c, dtype=np.float64)
    b = np.empty_like(c)
    b[..., -1] = c[..., -1]
    for m in range(c.shape[-1] - 2, -1, -1):
        b[..., m] = c[..., m] - alpha * b[..., m + 1]
    return b


def mlsa_to_mel_cepstrum(b: np.ndarray, alpha: float) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    c = b.copy()
    c[..., :-1] += alpha * b[..., 1:]
    return c


class MLSAFilter:
    """Two-stage MLSA structure: first-order stage on b(1), FIR chain on b(2..M)."""

    def __init__(self, order: int, alpha: float, pade: tuple[float, ...] = PADE5):
        self.m = order
        self.alpha = alpha
        self.pade = pade
        self.pd = len(pade) - 1
        pd, m = self.pd, order
        self.d1 = [0.0] * (pd + 1)
        self.pt1 = [0.0] * (pd + 1)
        self.fir = [[0.0] * (m + 2) for _ in range(pd)]
        self.pt2 = [0.0] * (pd + 1)

    def _fir(self, x: float, b: list[float], d: list[float]) -> float:
        a, m = self.alpha, self.m
        d[0] = x
        d[1] = (1.0 - a * a) * d[0] + a * d[1]
        y = 0.0
        for i in range(2, m + 1):
            d[i] += a * (d[i + 1] - d[i - 1])
            y += d[i] * b[i]
        for i in range(m + 1, 1, -1):
            d[i] = d[i - 1]
        return y

    def _stage1(self, x: float, b1: float) -> float:
        a = self.alpha
        aa = 1.0 - a * a
        d, pt, pade = self.d1, self.pt1, self.pade
        out = 0.0
        for i in range(self.pd, 0, -1):
            d[i] = aa * pt[i - 1] + a * d[i]
            pt[i] = d[i] * b1
            v = pt[i] * pade[i]
            x += v if i & 1 else -v
            out += v
        pt[0] = x
        return out + x

    def _stage2(self, x: float, b: list[float]) -> float:
        pt, pade = self.pt2, self.pade
        out = 0.0
        for i in range(self.pd, 0, -1):
            pt[i] = self._fir(pt[i - 1], b, self.fir[i - 1])
            v = pt[i] * pade[i]
            x += v if i & 1 else -v
            out += v
        pt[0] = x
        return out + x

    def step(self, x: float, b: list[float]) -> float:
        x *= math.exp(b[0])
        if self.m >= 1:
            x = self._stage1(x, b[1])
        if self.m >= 2:
            x = self._stage2(x, b)
        return x


def interpolate_frames(values: np.ndarray, hop: int, n_samples: int) -> np.ndarray:
    """Per-sample values from per-frame rows; frame t sits at sample t·hop."""
    T = values.shape[0]
    centres = np.arange(T) * hop
    n = np.arange(n_samples)
    return np.stack([np.interp(n, centres, values[:, j]) for j in range(values.shape[1])], axis=1)


def mlsa_filter(
    excitation: np.ndarray,
    melcep: np.ndarray,
    alpha: float,
    sample_rate: int,
    frame_shift: float = 0.005,
) -> WaveformBuffer:
    excitation = np.asarray(excitation, dtype=np.float64)
    melcep = np.asarray(melcep, dtype=np.float64)
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if melcep.ndim != 2 or melcep.shape[1] < 1:
        raise ShapeError(f"mel-cepstra must be T × (M + 1), got {melcep.shape}")
    if excitation.shape[0] == 0:
        return WaveformBuffer(np.zeros(0), sample_rate)

    hop = frame_hop(sample_rate, frame_shift)
    b = mel_cepstrum_to_mlsa(melcep, alpha)
    per_sample = interpolate_frames(b, hop, excitation.shape[0]).tolist()
    filt = MLSAFilter(melcep.shape[1] - 1, alpha)

    out = np.empty(excitation.shape[0])
    for n, x in enumerate(excitation.tolist()):
        y = filt.step(x, per_sample[n])
        if not math.isfinite(y) or abs(y) > OVERFLOW_LIMIT:
            raise FilterOverflowError(
                f"MLSA filter overflow at sample {n} (frame {n // hop}): output {y!r}; "
                f"check the mel-cepstra range or alpha={alpha}"
            )
        out[n] = y
    return WaveformBuffer(out, sample_rate)


# ─── Full chain ───────────────────────────────────────────────────────────────

def vocode(
    features: np.ndarray,
    note_logf0: np.ndarray,
    layout: AcousticLayout,
    cfg: SynthesisConfig,
    frame_shift: float = 0.005,
) -> WaveformBuffer:
    """Denormalized T × D acoustic features → clipped waveform."""
    if features.ndim != 2 or features.shape[1] != layout.dim:
        raise ShapeError(f"features {features.shape} do not match layout width {layout.dim}")
    vib = features[:, layout.slice_of("vibrato")]
    f0 = reconstruct_logf0(
        features[:, layout.lf0_index], note_logf0, features[:, layout.vuv_index],
        frame_shift, cfg.vuv_threshold,
    )
    sections = vibrato_sections(
        np.maximum(vib[:, 0], 0.0), vib[:, 1], features[:, layout.vibrato_flag_index],
        cfg.vuv_threshold, cfg.vibrato_min_cents,
    )
    f0 = apply_vibrato(f0, sections)
    voiced = int(f0.voiced.sum())
    log.info(f"Vocoding {f0.length} frames ({voiced} voiced, {len(sections)} vibrato section(s))")

    rng = np.random.default_rng(cfg.seed)
    excitation = generate_excitation(f0, cfg.sample_rate, rng)
    wave = mlsa_filter(excitation, features[:, layout.slice_of("mgc")], cfg.alpha, cfg.sample_rate, frame_shift)
    return WaveformBuffer(wave.samples * cfg.gain, cfg.sample_rate).clipped()
