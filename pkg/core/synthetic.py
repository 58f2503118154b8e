"""
Synthetic corpus – deterministic scores plus reference acoustic features
computed by a fixed analytic rule. Used when no recorded corpus is at hand.

Score generation (one numpy Generator seeded with `seed`, songs in order;
within a song, draws happen in exactly this order per event):
  - before every event except the first, if the previous event is a note,
    draw u = random(); when u < 0.15 and at least 10 + 30 frames remain,
    a rest of integers(10, 41) frames is inserted (capped so ≥ 30 remain)
  - a note draws midi = integers(60, 73), length = integers(30, 151),
    vowel = choice(VOWELS), u = random(); when u < 0.6 it also draws
    consonant = choice(CONSONANTS) and consonant length = integers(5, 16)
  - a note that would leave fewer than 30 frames absorbs the remainder
  - the last event is always a note, ending exactly at frames_per_song

Reference features for a score (pure function of the score):
  mgc      per-phone cosine template, c(1) tilted by 0.02·(midi − 66) on
           notes, every coefficient box-smoothed over 9 frames
  lf0_diff −Δ·exp(−k/8) over note frame k, Δ = note log-F0 minus the previous
           note's (0 for the first note); unvoiced frames (rests, k/s/t)
           are interpolated with flag 0
  vibrato  on notes of ≥ 80 frames from frame 40 onward:
           amplitude 50·min(1, (k − 40)/20) cents at 5.5 Hz, flag 1;
           elsewhere interpolated with flag 0
  ap       −30 + 25·j/(n_ap − 1) on voiced frames, 0 unvoiced, box-smoothed
  flags    F0 value flag (1 voiced), vibrato value flag
"""

import logging

import numpy as np
from scipy.ndimage import uniform_filter1d

from .corpus import Corpus, CorpusItem
from .errors import ConfigError
from .model import AcousticLayout, interpolate_gaps
from .score import NoteEvent, Phone, Score, midi_to_logf0

log = logging.getLogger("Synthetic")

VOWELS = ("a", "i", "u", "e", "o")
CONSONANTS = ("k", "s", "t", "n", "m", "r")
UNVOICED = frozenset({"k", "s", "t"})
PHONE_ORDER = ("pau",) + VOWELS + CONSONANTS

REST_PROB = 0.15
CONSONANT_PROB = 0.6
MIN_NOTE = 30
SMOOTH_FRAMES = 9
APPROACH_FRAMES = 8.0
VIBRATO_MIN_NOTE = 80
VIBRATO_DELAY = 40
VIBRATO_FADE = 20
VIBRATO_CENTS = 50.0
VIBRATO_HZ = 5.5

# log gain per phone class
C0_REST = float(np.log(0.005))
C0_UNVOICED = float(np.log(0.01))
C0_VOICED = float(np.log(0.02))


# ─── Scores ───────────────────────────────────────────────────────────────────

def _note(rng: np.random.Generator, start: int, remaining: int) -> NoteEvent:
    midi = int(rng.integers(60, 73))
    length = int(rng.integers(MIN_NOTE, 151))
    vowel = str(rng.choice(VOWELS))
    consonant, c_len = None, 0
    if rng.random() < CONSONANT_PROB:
        consonant = str(rng.choice(CONSONANTS))
        c_len = int(rng.integers(5, 16))
    if remaining - length < MIN_NOTE:
        length = remaining
    length = min(length, remaining)
    phones = []
    if consonant is not None and c_len < length - 5:
        phones.append(Phone(consonant, start, start + c_len))
        phones.append(Phone(vowel, start + c_len, start + length))
    else:
        phones.append(Phone(vowel, start, start + length))
    return NoteEvent("note", start, start + length, midi, tuple(phones))


def synthetic_score(rng: np.random.Generator, frames: int) -> Score:
    if frames < MIN_NOTE:
        raise ConfigError(f"synthetic songs need at least {MIN_NOTE} frames, got {frames}")
    events: list[NoteEvent] = []
    cursor = 0
    while cursor < frames:
        remaining = frames - cursor
        if events and not events[-1].is_rest:
            u = rng.random()
            if u < REST_PROB and remaining >= 10 + MIN_NOTE:
                length = min(int(rng.integers(10, 41)), remaining - MIN_NOTE)
                events.append(NoteEvent("rest", cursor, cursor + length, None, ()))
                cursor += length
                continue
        note = _note(rng, cursor, remaining)
        events.append(note)
        cursor = note.end_frame
    return Score(tempo_bpm=120.0, frame_shift_s=0.005, events=tuple(events))


# ─── Features ─────────────────────────────────────────────────────────────────

def phone_template(symbol: str, n_mgc: int) -> np.ndarray:
    """Mel-cepstral template: class log gain in c(0), cosine shape above."""
    p = PHONE_ORDER.index(symbol) if symbol in PHONE_ORDER else 0
    tmpl = np.zeros(n_mgc)
    if symbol == "pau":
        tmpl[0] = C0_REST
    elif symbol in UNVOICED:
        tmpl[0] = C0_UNVOICED
    else:
        tmpl[0] = C0_VOICED
    m = np.arange(1, n_mgc)
    tmpl[1:] = 0.3 * np.cos(np.pi * (p + 1) * m / n_mgc) / m
    return tmpl


def reference_features(score: Score, layout: AcousticLayout) -> np.ndarray:
    T = score.n_frames
    feats = np.zeros((T, layout.dim))
    mgc = np.zeros((T, layout.mgc))
    diff = np.zeros(T)
    voiced = np.zeros(T, dtype=bool)
    vib_amp = np.zeros(T)
    vib_on = np.zeros(T, dtype=bool)

    prev_logf0 = None
    for ev in score.events:
        s, e = ev.start_frame, ev.end_frame
        if ev.is_rest:
            mgc[s:e] = phone_template("pau", layout.mgc)
            continue
        logf0 = midi_to_logf0(ev.midi_pitch)
        delta = 0.0 if prev_logf0 is None else logf0 - prev_logf0
        k = np.arange(e - s)
        diff[s:e] = -delta * np.exp(-k / APPROACH_FRAMES)
        for ph in ev.phones:
            mgc[ph.start_frame:ph.end_frame] = phone_template(ph.sym, layout.mgc)
            voiced[ph.start_frame:ph.end_frame] = ph.sym not in UNVOICED
        if layout.mgc > 1:
            mgc[s:e, 1] += 0.02 * (ev.midi_pitch - 66)
        if e - s >= VIBRATO_MIN_NOTE:
            kv = np.arange(VIBRATO_DELAY, e - s)
            vib_amp[s + kv] = VIBRATO_CENTS * np.minimum(1.0, (kv - VIBRATO_DELAY) / VIBRATO_FADE)
            vib_on[s + kv] = True
        prev_logf0 = logf0

    feats[:, layout.slice_of("mgc")] = uniform_filter1d(mgc, SMOOTH_FRAMES, axis=0, mode="nearest")
    feats[:, layout.lf0_index] = interpolate_gaps(diff, voiced)

    if layout.ap:
        j = np.arange(layout.ap)
        ramp = -30.0 + 25.0 * j / max(layout.ap - 1, 1)
        ap = np.where(voiced[:, None], ramp[None, :], 0.0)
        feats[:, layout.slice_of("ap")] = uniform_filter1d(ap, SMOOTH_FRAMES, axis=0, mode="nearest")

    vib = layout.slice_of("vibrato")
    feats[:, vib.start] = interpolate_gaps(vib_amp, vib_on)
    feats[:, vib.start + 1] = interpolate_gaps(np.full(T, VIBRATO_HZ), vib_on)
    feats[:, layout.vuv_index] = voiced.astype(np.float64)
    feats[:, layout.vibrato_flag_index] = vib_on.astype(np.float64)
    return feats


def make_synthetic_corpus(
    seed: int,
    n_songs: int,
    frames_per_song: int,
    layout: AcousticLayout | None = None,
) -> Corpus:
    if n_songs < 1:
        raise ConfigError(f"synthetic corpus needs at least one song, got {n_songs}")
    layout = layout or AcousticLayout()
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n_songs):
        score = synthetic_score(rng, frames_per_song)
        items.append(CorpusItem(f"song{i:03d}", score, reference_features(score, layout)))
    log.info(f"Synthetic corpus: {n_songs} song(s) × {frames_per_song} frames (seed {seed})")
    return Corpus(items=items, layout=layout, provenance=f"synthetic:{seed},{n_songs},{frames_per_song}")
