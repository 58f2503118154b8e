"""
Score features – parses aligned musical scores and turns them into the
per-frame context matrix, the interpolated note log-F0 track and the
normalization statistics shared by training and synthesis.

Score file (UTF-8 JSON):
  {"tempo_bpm": 120, "frame_shift_s": 0.005,
   "events": [{"kind": "note", "midi": 69, "start_frame": 0, "end_frame": 100,
               "phones": [{"sym": "a", "start_frame": 0, "end_frame": 100}]},
              {"kind": "rest", "start_frame": 100, "end_frame": 120, "phones": []}]}

Frame indices are in units of the declared frame shift; end frames are exclusive.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FeatureError, ScoreFormatError, ShapeError

log = logging.getLogger("Score")

A4_HZ = 440.0
A4_MIDI = 69

INPUT_RANGE = (0.0, 1.0)
OUTPUT_RANGE = (0.01, 0.99)


# ─── Score types ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Phone:
    sym: str
    start_frame: int
    end_frame: int

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame


@dataclass(frozen=True)
class NoteEvent:
    kind: str                       # "note" | "rest"
    start_frame: int
    end_frame: int
    midi_pitch: int | None = None   # None for rests
    phones: tuple[Phone, ...] = ()

    @property
    def is_rest(self) -> bool:
        return self.kind == "rest"

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame


@dataclass(frozen=True)
class Score:
    tempo_bpm: float
    frame_shift_s: float
    events: tuple[NoteEvent, ...]

    @property
    def n_frames(self) -> int:
        return self.events[-1].end_frame if self.events else 0

    def to_dict(self) -> dict:
        events = []
        for ev in self.events:
            d = {
                "kind": ev.kind,
                "start_frame": ev.start_frame,
                "end_frame": ev.end_frame,
                "phones": [
                    {"sym": p.sym, "start_frame": p.start_frame, "end_frame": p.end_frame}
                    for p in ev.phones
                ],
            }
            if ev.midi_pitch is not None:
                d["midi"] = ev.midi_pitch
            events.append(d)
        return {"tempo_bpm": self.tempo_bpm, "frame_shift_s": self.frame_shift_s, "events": events}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ─── Parsing ──────────────────────────────────────────────────────────────────

def _int_field(d: dict, key: str, where: str) -> int:
    val = d.get(key)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ScoreFormatError(f"{where}: '{key}' must be an integer, got {val!r}")
    return val


def _parse_event(raw: dict, idx: int) -> NoteEvent:
    where = f"event {idx}"
    if not isinstance(raw, dict):
        raise ScoreFormatError(f"{where}: expected an object")
    kind = raw.get("kind")
    if kind not in ("note", "rest"):
        raise ScoreFormatError(f"{where}: kind must be 'note' or 'rest', got {kind!r}")
    start = _int_field(raw, "start_frame", where)
    end = _int_field(raw, "end_frame", where)
    if end - start < 1:
        raise ScoreFormatError(f"{where}: must cover at least one frame ({start}..{end})")

    raw_phones = raw.get("phones", [])
    if not isinstance(raw_phones, list):
        raise ScoreFormatError(f"{where}: 'phones' must be a list")

    if kind == "rest":
        if raw_phones:
            raise ScoreFormatError(f"{where}: rests carry no phones")
        return NoteEvent(kind="rest", start_frame=start, end_frame=end)

    midi = _int_field(raw, "midi", where)
    if not 0 <= midi <= 127:
        raise ScoreFormatError(f"{where}: midi pitch {midi} outside [0, 127]")

    phones = []
    cursor = start
    for j, rp in enumerate(raw_phones):
        pw = f"{where} phone {j}"
        if not isinstance(rp, dict) or not isinstance(rp.get("sym"), str) or not rp["sym"]:
            raise ScoreFormatError(f"{pw}: needs a non-empty 'sym'")
        ps = _int_field(rp, "start_frame", pw)
        pe = _int_field(rp, "end_frame", pw)
        if ps != cursor or pe <= ps:
            raise ScoreFormatError(f"{where}: phones do not tile note")
        phones.append(Phone(rp["sym"], ps, pe))
        cursor = pe
    if cursor != end:
        raise ScoreFormatError(f"{where}: phones do not tile note")

    return NoteEvent(kind="note", start_frame=start, end_frame=end,
                     midi_pitch=midi, phones=tuple(phones))


def parse_score(text: str) -> Score:
    """Parse score-file JSON into a validated Score."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScoreFormatError(f"Malformed score JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ScoreFormatError("Score must be a JSON object")

    try:
        tempo = float(raw.get("tempo_bpm", 0))
        shift = float(raw.get("frame_shift_s", 0))
    except (TypeError, ValueError) as e:
        raise ScoreFormatError(f"Bad tempo or frame shift: {e}") from e
    if tempo <= 0 or shift <= 0:
        raise ScoreFormatError("tempo_bpm and frame_shift_s must be positive")

    raw_events = raw.get("events")
    if not isinstance(raw_events, list) or not raw_events:
        raise ScoreFormatError("Score needs a non-empty 'events' list")

    events = [_parse_event(ev, i) for i, ev in enumerate(raw_events)]
    if events[0].start_frame != 0:
        raise ScoreFormatError("First event must start at frame 0")
    for prev, cur in zip(events, events[1:]):
        if cur.start_frame < prev.end_frame:
            raise ScoreFormatError(
                f"Overlapping events at frames {cur.start_frame}..{prev.end_frame}"
            )
        if cur.start_frame > prev.end_frame:
            raise ScoreFormatError(
                f"Gap between events at frames {prev.end_frame}..{cur.start_frame}"
            )

    score = Score(tempo_bpm=tempo, frame_shift_s=shift, events=tuple(events))
    log.debug(f"Parsed score: {len(events)} events, {score.n_frames} frames")
    return score


def load_score(path: str | Path) -> Score:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScoreFormatError(f"Cannot read score {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ScoreFormatError(f"Score {path} is not valid UTF-8: {e}") from e
    return parse_score(text)


# ─── Note pitch track ─────────────────────────────────────────────────────────

def midi_to_hz(midi: float) -> float:
    return A4_HZ * 2.0 ** ((midi - A4_MIDI) / 12.0)


def midi_to_logf0(midi: float) -> float:
    return math.log(midi_to_hz(midi))


def interpolate_note_logf0(score: Score) -> np.ndarray:
    """
    Length-T log-Hz track: note frames hold the note's log frequency. A run
    of consecutive rests between two notes is one gap and ramps linearly
    across the whole run; leading and trailing runs hold the nearest note.
    """
    notes = [ev for ev in score.events if not ev.is_rest]
    if not notes:
        raise ScoreFormatError("Score has no notes; cannot build a pitch track")

    track = np.empty(score.n_frames, dtype=np.float64)
    events = score.events
    i = 0
    while i < len(events):
        ev = events[i]
        if not ev.is_rest:
            track[ev.start_frame:ev.end_frame] = midi_to_logf0(ev.midi_pitch)
            i += 1
            continue
        j = i
        while j < len(events) and events[j].is_rest:
            j += 1
        s, e = ev.start_frame, events[j - 1].end_frame
        before = events[i - 1] if i > 0 else None
        after = events[j] if j < len(events) else None
        if before is None:
            track[s:e] = midi_to_logf0(after.midi_pitch)
        elif after is None:
            track[s:e] = midi_to_logf0(before.midi_pitch)
        else:
            a = midi_to_logf0(before.midi_pitch)
            b = midi_to_logf0(after.midi_pitch)
            k = np.arange(e - s, dtype=np.float64)
            track[s:e] = a + (b - a) * k / (e - s)
        i = j
    return track


# ─── Context encoding ─────────────────────────────────────────────────────────

BINARY_FEATURES = ("phone", "prev_phone", "next_phone", "is_rest", "pitch_class")
NUMERIC_FEATURES = (
    "note_pitch", "pos_in_phone", "pos_in_note", "note_duration",
    "phone_duration", "prev_note_pitch", "next_note_pitch", "tempo",
)


@dataclass
class FeatureConfig:
    """Context feature set. Changing it changes the model input dimension."""
    phone_inventory: list[str] = field(default_factory=lambda: [
        "pau", "a", "i", "u", "e", "o", "k", "s", "t", "n", "m", "r",
    ])
    binary_context_spec: list[str] = field(default_factory=lambda: ["phone", "is_rest"])
    numeric_context_spec: list[str] = field(default_factory=lambda: [
        "note_pitch", "pos_in_phone", "pos_in_note", "note_duration", "phone_duration",
    ])
    rest_symbol: str = "pau"

    def __post_init__(self):
        if len(set(self.phone_inventory)) != len(self.phone_inventory):
            raise ConfigError("phone_inventory contains duplicates")
        for name in self.binary_context_spec:
            if name not in BINARY_FEATURES:
                raise ConfigError(f"Unknown binary context feature '{name}'")
        for name in self.numeric_context_spec:
            if name not in NUMERIC_FEATURES:
                raise ConfigError(f"Unknown numeric context feature '{name}'")

    def block_width(self, name: str) -> int:
        if name in ("phone", "prev_phone", "next_phone"):
            return len(self.phone_inventory)
        if name == "pitch_class":
            return 12
        return 1

    @property
    def input_dim(self) -> int:
        binary = sum(self.block_width(n) for n in self.binary_context_spec)
        return binary + len(self.numeric_context_spec)

    def to_dict(self) -> dict:
        return {
            "phone_inventory": list(self.phone_inventory),
            "binary_context_spec": list(self.binary_context_spec),
            "numeric_context_spec": list(self.numeric_context_spec),
            "rest_symbol": self.rest_symbol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            log.warning(f"FeatureConfig: ignoring unknown keys {sorted(unknown)}")
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class _FrameContext:
    """Per-frame view used while encoding."""
    event: NoteEvent
    phone_sym: str | None
    phone_start: int
    phone_len: int
    prev_phone: str | None
    next_phone: str | None
    prev_pitch: int
    next_pitch: int


def _phone_sequence(score: Score, rest_symbol: str) -> list[tuple[str, int, int]]:
    """Flatten the score into (symbol, start, end) segments; rests use rest_symbol."""
    seq = []
    for ev in score.events:
        if ev.is_rest:
            seq.append((rest_symbol, ev.start_frame, ev.end_frame))
        else:
            seq.extend((p.sym, p.start_frame, p.end_frame) for p in ev.phones)
    return seq


def encode_contexts(score: Score, cfg: FeatureConfig) -> np.ndarray:
    """Raw (unnormalized) T × D_in context matrix. Binary blocks first."""
    inventory = {sym: i for i, sym in enumerate(cfg.phone_inventory)}
    for ev in score.events:
        for p in ev.phones:
            if p.sym not in inventory:
                raise FeatureError(f"Unknown phone symbol '{p.sym}' at frame {p.start_frame}")

    T = score.n_frames
    out = np.zeros((T, cfg.input_dim), dtype=np.float64)
    segments = _phone_sequence(score, cfg.rest_symbol)
    events = score.events

    # event and phone lookup per frame
    seg_of_frame = np.empty(T, dtype=np.int64)
    for si, (_, s, e) in enumerate(segments):
        seg_of_frame[s:e] = si
    ev_of_frame = np.empty(T, dtype=np.int64)
    for ei, ev in enumerate(events):
        ev_of_frame[ev.start_frame:ev.end_frame] = ei

    def pitch_of(ei: int) -> int:
        ev = events[ei]
        return ev.midi_pitch if ev.midi_pitch is not None else 0

    for t in range(T):
        si = seg_of_frame[t]
        ei = ev_of_frame[t]
        ev = events[ei]
        sym, ps, pe = segments[si]
        col = 0
        for name in cfg.binary_context_spec:
            width = cfg.block_width(name)
            if name == "phone":
                target = sym
            elif name == "prev_phone":
                target = segments[si - 1][0] if si > 0 else None
            elif name == "next_phone":
                target = segments[si + 1][0] if si + 1 < len(segments) else None
            else:
                target = None
            if name in ("phone", "prev_phone", "next_phone"):
                if target is not None and target in inventory:
                    out[t, col + inventory[target]] = 1.0
            elif name == "is_rest":
                out[t, col] = 1.0 if ev.is_rest else 0.0
            elif name == "pitch_class" and not ev.is_rest:
                out[t, col + ev.midi_pitch % 12] = 1.0
            col += width
        for name in cfg.numeric_context_spec:
            if name == "note_pitch":
                val = pitch_of(ei)
            elif name == "pos_in_phone":
                val = (t - ps) / (pe - ps)
            elif name == "pos_in_note":
                val = (t - ev.start_frame) / ev.length
            elif name == "note_duration":
                val = ev.length
            elif name == "phone_duration":
                val = pe - ps
            elif name == "prev_note_pitch":
                val = pitch_of(ei - 1) if ei > 0 else 0
            elif name == "next_note_pitch":
                val = pitch_of(ei + 1) if ei + 1 < len(events) else 0
            else:  # tempo
                val = score.tempo_bpm
            out[t, col] = val
            col += 1
    return out


# ─── Normalization ────────────────────────────────────────────────────────────

@dataclass
class NormStats:
    """Per-dimension min/max of model inputs, outputs and the note pitch track."""
    in_min: np.ndarray
    in_max: np.ndarray
    out_min: np.ndarray
    out_max: np.ndarray
    pitch_min: float = 0.0
    pitch_max: float = 0.0

    @property
    def constant_in(self) -> np.ndarray:
        return self.in_max == self.in_min

    @property
    def constant_out(self) -> np.ndarray:
        return self.out_max == self.out_min

    def normalize_pitch(self, track: np.ndarray) -> np.ndarray:
        lo, hi = INPUT_RANGE
        if self.pitch_max == self.pitch_min:
            return np.full_like(track, (lo + hi) / 2.0)
        return lo + (track - self.pitch_min) * (hi - lo) / (self.pitch_max - self.pitch_min)


def fit_norm_stats(
    inputs: list[np.ndarray],
    outputs: list[np.ndarray],
    pitch_tracks: list[np.ndarray] | None = None,
) -> NormStats:
    """Min/max over all training frames."""
    if not inputs or not outputs:
        raise FeatureError("Cannot fit normalization statistics on an empty corpus")
    x = np.concatenate(inputs, axis=0)
    y = np.concatenate(outputs, axis=0)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise FeatureError("Cannot fit normalization statistics on an empty corpus")
    pitch_min = pitch_max = 0.0
    if pitch_tracks:
        p = np.concatenate(pitch_tracks)
        pitch_min, pitch_max = float(p.min()), float(p.max())
    stats = NormStats(
        in_min=x.min(axis=0), in_max=x.max(axis=0),
        out_min=y.min(axis=0), out_max=y.max(axis=0),
        pitch_min=pitch_min, pitch_max=pitch_max,
    )
    n_const = int(stats.constant_in.sum() + stats.constant_out.sum())
    if n_const:
        log.info(f"Normalization: {n_const} constant dimension(s) map to the range midpoint")
    return stats


def _bounds(stats: NormStats, target: str) -> tuple[np.ndarray, np.ndarray, tuple[float, float]]:
    if target == "input":
        return stats.in_min, stats.in_max, INPUT_RANGE
    if target == "output":
        return stats.out_min, stats.out_max, OUTPUT_RANGE
    raise ValueError(f"target must be 'input' or 'output', got {target!r}")


def scale_to_range(matrix: np.ndarray, mn: np.ndarray, mx: np.ndarray,
                   bounds: tuple[float, float]) -> np.ndarray:
    """Affine map of [mn, mx] onto bounds, per column; constant columns go to the midpoint."""
    lo, hi = bounds
    if matrix.shape[-1] != mn.shape[0]:
        raise ShapeError(f"matrix has {matrix.shape[-1]} dims, range has {mn.shape[0]}")
    span = mx - mn
    const = span == 0
    safe = np.where(const, 1.0, span)
    out = lo + (matrix - mn) * (hi - lo) / safe
    return np.where(const, (lo + hi) / 2.0, out)


def unscale_from_range(matrix: np.ndarray, mn: np.ndarray, mx: np.ndarray,
                       bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = bounds
    if matrix.shape[-1] != mn.shape[0]:
        raise ShapeError(f"matrix has {matrix.shape[-1]} dims, range has {mn.shape[0]}")
    span = mx - mn
    out = mn + (matrix - lo) * span / (hi - lo)
    return np.where(span == 0, mn, out)


def normalize(matrix: np.ndarray, stats: NormStats, target: str) -> np.ndarray:
    mn, mx, bounds = _bounds(stats, target)
    return scale_to_range(matrix, mn, mx, bounds)


def denormalize(matrix: np.ndarray, stats: NormStats, target: str) -> np.ndarray:
    mn, mx, bounds = _bounds(stats, target)
    return unscale_from_range(matrix, mn, mx, bounds)


# ─── Model input bundle ───────────────────────────────────────────────────────

@dataclass
class ScoreFeatureSequence:
    frames: np.ndarray        # T × D_in, normalized into [0, 1]
    note_logf0: np.ndarray    # length T, log-Hz
    length: int
    pitch: np.ndarray | None = None   # note_logf0 normalized into [0, 1], fed to the back-end


def build_score_features(score: Score, cfg: FeatureConfig, stats: NormStats) -> ScoreFeatureSequence:
    raw = encode_contexts(score, cfg)
    frames = np.clip(normalize(raw, stats, "input"), *INPUT_RANGE)
    track = interpolate_note_logf0(score)
    pitch = np.clip(stats.normalize_pitch(track), *INPUT_RANGE)
    return ScoreFeatureSequence(frames=frames, note_logf0=track, length=score.n_frames, pitch=pitch)
