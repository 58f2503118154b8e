"""
Checkpoint evaluation against a corpus.
Used by the eval command and by the training-quality tests.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .checkpoint import ModelCheckpoint
from .corpus import Corpus
from .model import AcousticLayout
from .score import build_score_features, normalize
from .synthesizer import generate_features
from .trajectory import (
    ResidualAccumulator, WindowSet, build_window_matrix, nll_from_residual_stats,
    trajectory_residuals, update_tied_covariance,
)

log = logging.getLogger("Evaluation")


def smoothness(c: np.ndarray) -> float:
    """Mean |Δ¹| over frames and dimensions."""
    if c.shape[0] < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(c, axis=0))))


def roughness(c: np.ndarray) -> float:
    """Mean |Δ²| over frames and dimensions. A step scores about nine times a 9-frame ramp."""
    if c.shape[0] < 3:
        return 0.0
    return float(np.mean(np.abs(np.diff(c, n=2, axis=0))))


@dataclass
class EvalReport:
    kind: str
    layout: AcousticLayout
    items: int
    frames: int
    rms: np.ndarray                 # per dimension, denormalized statics
    value_range: np.ndarray         # per dimension, reference max − min
    nll: float                      # trajectory NLL, normalized space, summed over the corpus
    smoothness_pred: float          # mean |Δ¹| of normalized mel-cepstra
    smoothness_ref: float
    smoothness_raw: float | None = None   # baseline: static outputs before MLPG
    roughness_pred: float = 0.0           # mean |Δ²|, same tracks as smoothness
    roughness_ref: float = 0.0
    roughness_raw: float | None = None

    @property
    def nll_per_frame(self) -> float:
        return self.nll / self.frames if self.frames else float("nan")

    def part_rms(self, name: str) -> np.ndarray:
        return self.rms[self.layout.slice_of(name)]

    @property
    def mgc_relative_rms(self) -> float:
        """Worst mel-cepstral RMS as a fraction of that dimension's range."""
        sl = self.layout.slice_of("mgc")
        rng = self.value_range[sl]
        live = rng > 0
        if not live.any():
            return 0.0
        return float(np.max(self.rms[sl][live] / rng[live]))


def evaluate(
    ckpt: ModelCheckpoint,
    corpus: Corpus,
    segment_frames: int | None = None,
    workers: int = 1,
    windows: WindowSet | None = None,
) -> EvalReport:
    """
    Regenerate every corpus item and compare with its reference features.
    Proposed checkpoints score NLL under their stored covariance; baseline
    checkpoints under the covariance that fits their own residuals best.
    """
    if corpus.layout != ckpt.layout:
        log.warning(f"Corpus layout {corpus.layout.to_dict()} differs from checkpoint {ckpt.layout.to_dict()}")
    model = ckpt.build_model()
    windows = windows or WindowSet()
    mgc = ckpt.layout.slice_of("mgc")

    sq = np.zeros(ckpt.layout.dim)
    lo = np.full(ckpt.layout.dim, np.inf)
    hi = np.full(ckpt.layout.dim, -np.inf)
    acc = ResidualAccumulator()
    frames = 0
    smooth_pred = smooth_ref = smooth_raw = 0.0
    rough_pred = rough_ref = rough_raw = 0.0

    for item in corpus.items:
        s = build_score_features(item.score, ckpt.feature_cfg, ckpt.stats)
        feats = generate_features(ckpt, s, segment_frames=segment_frames, workers=workers, model=model)
        ref = item.features
        T = ref.shape[0]
        sq += np.sum((feats.statics - ref) ** 2, axis=0)
        lo = np.minimum(lo, ref.min(axis=0))
        hi = np.maximum(hi, ref.max(axis=0))

        pred_n = normalize(feats.statics, ckpt.stats, "output")
        ref_n = normalize(ref, ckpt.stats, "output")
        acc.add(trajectory_residuals(pred_n, ref_n, build_window_matrix(T, windows)))

        smooth_pred += smoothness(pred_n[:, mgc]) * T
        smooth_ref += smoothness(ref_n[:, mgc]) * T
        rough_pred += roughness(pred_n[:, mgc]) * T
        rough_ref += roughness(ref_n[:, mgc]) * T
        if feats.raw_statics is not None:
            raw_n = normalize(feats.raw_statics, ckpt.stats, "output")[:, mgc]
            smooth_raw += smoothness(raw_n) * T
            rough_raw += roughness(raw_n) * T
        frames += T

    cov = ckpt.covariance if ckpt.kind == "proposed" else update_tied_covariance(acc)
    report = EvalReport(
        kind=ckpt.kind,
        layout=ckpt.layout,
        items=len(corpus),
        frames=frames,
        rms=np.sqrt(sq / frames),
        value_range=hi - lo,
        nll=nll_from_residual_stats(acc, cov),
        smoothness_pred=smooth_pred / frames,
        smoothness_ref=smooth_ref / frames,
        smoothness_raw=smooth_raw / frames if ckpt.kind == "baseline" else None,
        roughness_pred=rough_pred / frames,
        roughness_ref=rough_ref / frames,
        roughness_raw=rough_raw / frames if ckpt.kind == "baseline" else None,
    )
    log.info(f"Evaluated {ckpt.kind} checkpoint on {len(corpus)} item(s): NLL/frame {report.nll_per_frame:.3f}")
    return report
