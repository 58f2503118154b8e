"""
Synthesis pipeline: score → context features → segment-wise model passes →
cross-fade → denormalize → vocoder → WAV.

Segments are T frames long and consecutive segments share `overlap` frames.
Overlap frame k (0-based) of the join between segment a and b is
    a + r·(b − a),   r = (k + 1) / (overlap + 1)
so the earlier segment fades out linearly. Blending happens in the model's
normalized output space, before denormalization.

Baseline checkpoints predict static + Δ¹ + Δ² means; those are stitched the
same way, mapped back to raw o-space and turned into a trajectory by MLPG.
"""

import asyncio
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import WaveformBuffer, write_wav
from .checkpoint import ModelCheckpoint
from .corpus import write_feature_matrix
from .errors import ConfigError, FeatureError, ShapeError
from .mlpg import GenerationProblem, mlpg_generate
from .model import AcousticModel
from .score import OUTPUT_RANGE, Score, ScoreFeatureSequence, build_score_features, denormalize, unscale_from_range
from .vocoder import SynthesisConfig, vocode

log = logging.getLogger("Synthesizer")


# ─── Segments ─────────────────────────────────────────────────────────────────

def segment_plan(total: int, length: int, overlap: int, min_frames: int = 1) -> list[tuple[int, int]]:
    """
    [start, end) ranges covering total frames; consecutive ranges share
    exactly `overlap` frames. A tail that would be all overlap, or shorter
    than min_frames, is absorbed by the segment before it.
    """
    if total < 1:
        raise ShapeError("cannot plan segments for an empty sequence")
    if length < 1 or not 0 <= overlap < length:
        raise ConfigError(f"segment length {length} needs 0 ≤ overlap < length, got overlap {overlap}")
    ranges = []
    start = 0
    while True:
        end = min(start + length, total)
        ranges.append((start, end))
        if end == total:
            break
        start = end - overlap
    if len(ranges) > 1:
        s, e = ranges[-1]
        if e - s < max(min_frames, overlap + 1):
            ranges.pop()
            ranges[-1] = (ranges[-1][0], e)
    return ranges


def crossfade_weights(overlap: int) -> np.ndarray:
    """Share of the later segment at each overlap frame."""
    return (np.arange(overlap, dtype=np.float64) + 1.0) / (overlap + 1.0)


def crossfade_stitch(segments: list[np.ndarray], overlap: int) -> np.ndarray:
    if not segments:
        raise ShapeError("nothing to stitch")
    if overlap < 0:
        raise ConfigError(f"overlap must be ≥ 0, got {overlap}")
    for i, seg in enumerate(segments):
        if seg.ndim != 2 or seg.shape[1] != segments[0].shape[1]:
            raise ShapeError(f"segment {i} has shape {seg.shape}, expected T × {segments[0].shape[1]}")
        if seg.shape[0] < overlap:
            raise ShapeError(f"overlap of {overlap} frames is larger than segment {i} ({seg.shape[0]} frames)")

    out = np.asarray(segments[0], dtype=np.float64).copy()
    if overlap == 0:
        return np.concatenate([out] + [np.asarray(s, dtype=np.float64) for s in segments[1:]], axis=0)
    r = crossfade_weights(overlap)[:, None]
    for b in segments[1:]:
        a_tail = out[-overlap:]
        blended = a_tail + r * (b[:overlap] - a_tail)
        out = np.concatenate([out[:-overlap], blended, b[overlap:]], axis=0)
    return out


# ─── Model passes ─────────────────────────────────────────────────────────────

async def _predict_all(
    model: AcousticModel,
    s: ScoreFeatureSequence,
    ranges: list[tuple[int, int]],
    workers: int,
) -> list[np.ndarray]:
    sem = asyncio.Semaphore(workers)

    async def one(start: int, end: int) -> np.ndarray:
        async with sem:
            return await asyncio.to_thread(model.predict, s.frames[start:end], s.pitch[start:end])

    # gather keeps submission order, so stitching is independent of scheduling
    return await asyncio.gather(*(one(a, b) for a, b in ranges))


def predict_segments(
    model: AcousticModel,
    s: ScoreFeatureSequence,
    ranges: list[tuple[int, int]],
    workers: int = 1,
) -> list[np.ndarray]:
    if s.pitch is None:
        raise ShapeError("score features carry no normalized pitch track")
    return asyncio.run(_predict_all(model, s, ranges, max(1, workers)))


@dataclass
class GeneratedFeatures:
    statics: np.ndarray                  # T × D, denormalized
    model_output: np.ndarray             # stitched raw model output (T × D or T × 3D)
    raw_statics: np.ndarray | None       # baseline only: static part before MLPG, denormalized
    segments: list[tuple[int, int]]


def generate_features(
    ckpt: ModelCheckpoint,
    s: ScoreFeatureSequence,
    segment_frames: int | None = None,
    overlap_frames: int | None = None,
    workers: int = 1,
    model: AcousticModel | None = None,
) -> GeneratedFeatures:
    """Stitched, denormalized acoustic features for one score."""
    model = model or ckpt.build_model()
    length = segment_frames or ckpt.model_cfg.segment_frames
    overlap = ckpt.model_cfg.overlap_frames if overlap_frames is None else overlap_frames
    if length < model.min_frames:
        raise ConfigError(f"segment length {length} is below the model minimum of {model.min_frames} frames")
    if s.length < model.min_frames:
        raise ShapeError(f"score has {s.length} frames, the model needs at least {model.min_frames}")

    ranges = segment_plan(s.length, length, overlap, model.min_frames)
    outputs = predict_segments(model, s, ranges, workers)
    stitched = crossfade_stitch(outputs, overlap)
    log.debug(f"Generated {s.length} frames in {len(ranges)} segment(s) (T={length}, overlap={overlap})")

    if ckpt.kind == "baseline":
        if ckpt.target_min is None or ckpt.target_max is None:
            raise ShapeError("baseline checkpoint lacks its target range")
        means = unscale_from_range(stitched, ckpt.target_min, ckpt.target_max, OUTPUT_RANGE)
        statics = mlpg_generate(GenerationProblem(means, ckpt.covariance.variances))
        return GeneratedFeatures(statics, stitched, means[:, :statics.shape[1]], ranges)

    return GeneratedFeatures(denormalize(stitched, ckpt.stats, "output"), stitched, None, ranges)


# ─── Full synthesis ───────────────────────────────────────────────────────────

@dataclass
class SynthesisResult:
    wave: WaveformBuffer
    features: GeneratedFeatures
    path: Path


def synthesize(
    ckpt: ModelCheckpoint,
    score: Score,
    out_path: str | Path,
    synth_cfg: SynthesisConfig | None = None,
    dump_features: str | Path | None = None,
    workers: int = 1,
    max_frames: int | None = None,
    segment_frames: int | None = None,
) -> SynthesisResult:
    synth_cfg = synth_cfg or SynthesisConfig()
    if max_frames is not None and score.n_frames > max_frames:
        raise FeatureError(
            f"score has {score.n_frames} frames, above the {max_frames}-frame synthesis limit "
            f"({max_frames * score.frame_shift_s / 60:.1f} min)"
        )
    s = build_score_features(score, ckpt.feature_cfg, ckpt.stats)
    feats = generate_features(ckpt, s, segment_frames=segment_frames, workers=workers)
    if dump_features is not None:
        write_feature_matrix(dump_features, feats.statics)
        log.info(f"Wrote {feats.statics.shape[0]}×{feats.statics.shape[1]} feature dump to {dump_features}")

    wave = vocode(feats.statics, s.note_logf0, ckpt.layout, synth_cfg, score.frame_shift_s)
    path = write_wav(wave, out_path)
    log.info(f"Synthesized {wave.duration_s:.2f}s from {ckpt.kind} checkpoint → {path}")
    return SynthesisResult(wave=wave, features=feats, path=path)
