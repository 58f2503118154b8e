"""
Training loop for both model kinds.

proposed  utterances are cut into segments of T_train frames; each segment
          is one Adam step on the trajectory NLL of the normalized statics.
          After every epoch the tied covariance is re-estimated from that
          epoch's residuals.
baseline  same segments; the network regresses static + Δ¹ + Δ² targets
          (raw o-space scaled into the output range) under per-frame
          squared error. The raw o-space variances are stored for MLPG.

Segment order is reshuffled every epoch from one seeded generator, which
also drives dropout, so (seed, corpus, config) fixes the loss log.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import run_log
from .checkpoint import ModelCheckpoint
from .corpus import Corpus
from .errors import ConfigError, CorpusError, NumericalError, ShapeError
from .model import MODEL_KINDS, AcousticModel, ModelConfig, build_model
from .score import (
    INPUT_RANGE, OUTPUT_RANGE, FeatureConfig, encode_contexts, fit_norm_stats,
    interpolate_note_logf0, normalize, scale_to_range,
)
from .tensor import Adam, Tensor, mul, square, sub, tensor_sum
from .trajectory import (
    VARIANCE_FLOOR, ResidualAccumulator, TiedCovariance, WindowMatrix, WindowSet,
    build_window_matrix, expand_trajectory, fit_covariance, trajectory_nll,
    trajectory_residuals, update_tied_covariance,
)

log = logging.getLogger("Trainer")

# Σ floor for the trajectory loss, in normalized output units. Caps the
# precision of coordinates the network fits almost exactly.
TRAJECTORY_VARIANCE_FLOOR = 1e-3


@dataclass
class TrainConfig:
    epochs: int = 200
    segment_frames: int | None = None   # None → model.segment_frames
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 1234
    mode: str = "proposed"              # "proposed" | "baseline"
    variance_floor: float = VARIANCE_FLOOR                        # baseline, raw o-space
    trajectory_variance_floor: float = TRAJECTORY_VARIANCE_FLOOR  # proposed, normalized

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"train.epochs must be ≥ 0, got {self.epochs}")
        if self.segment_frames is not None and self.segment_frames < 1:
            raise ConfigError(f"train.segment_frames must be ≥ 1, got {self.segment_frames}")
        if self.learning_rate <= 0 or self.eps <= 0:
            raise ConfigError("train.learning_rate and train.eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("train.beta1 and train.beta2 must be in [0, 1)")
        if self.mode not in MODEL_KINDS:
            raise ConfigError(f"train.mode must be one of {', '.join(MODEL_KINDS)}, got '{self.mode}'")
        if self.variance_floor <= 0 or self.trajectory_variance_floor <= 0:
            raise ConfigError("train.variance_floor and train.trajectory_variance_floor must be positive")

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            log.warning(f"TrainConfig: ignoring unknown keys {sorted(unknown)}")
        cfg = cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})
        cfg.validate()
        return cfg


@dataclass
class TrainingSegment:
    item: str
    start: int
    end: int
    frames: np.ndarray       # T × D_in, normalized
    pitch: np.ndarray        # (T,), normalized
    target: np.ndarray       # T × D (proposed) or T × 3D (baseline)

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else math.nan


def segment_ranges(total: int, length: int, min_frames: int = 1) -> list[tuple[int, int]]:
    """
    Consecutive [start, end) chunks of `length` frames. A trailing chunk
    shorter than min_frames is merged into the previous one.
    """
    if length < 1:
        raise ConfigError(f"segment length must be ≥ 1, got {length}")
    if total < min_frames:
        raise ShapeError(f"utterance of {total} frames is shorter than the {min_frames}-frame minimum")
    ranges = [(s, min(s + length, total)) for s in range(0, total, length)]
    if len(ranges) > 1 and ranges[-1][1] - ranges[-1][0] < min_frames:
        tail = ranges.pop()
        ranges[-1] = (ranges[-1][0], tail[1])
    return ranges


# ─── Data preparation ─────────────────────────────────────────────────────────

def resolve_model_config(model_cfg: ModelConfig, feature_cfg: FeatureConfig, output_dim: int) -> ModelConfig:
    if model_cfg.input_dim not in (0, feature_cfg.input_dim):
        raise ConfigError(
            f"model.input_dim={model_cfg.input_dim} disagrees with the feature set ({feature_cfg.input_dim})"
        )
    if model_cfg.output_dim != output_dim:
        log.info(f"model.output_dim {model_cfg.output_dim} → {output_dim} to match the corpus layout")
    cfg = replace(model_cfg, input_dim=feature_cfg.input_dim, output_dim=output_dim)
    cfg.validate()
    return cfg


def _raw_inputs(corpus: Corpus, feature_cfg: FeatureConfig):
    contexts, pitch_tracks = [], []
    for item in corpus.items:
        contexts.append(encode_contexts(item.score, feature_cfg))
        pitch_tracks.append(interpolate_note_logf0(item.score))
    return contexts, pitch_tracks


def _cut(corpus: Corpus, inputs, pitches, targets, length: int, min_frames: int) -> list[TrainingSegment]:
    segments = []
    for item, x, p, y in zip(corpus.items, inputs, pitches, targets):
        try:
            ranges = segment_ranges(x.shape[0], length, min_frames)
        except ShapeError as e:
            raise CorpusError(f"item '{item.name}': {e}") from e
        for s, e in ranges:
            segments.append(TrainingSegment(item.name, s, e, x[s:e], p[s:e], y[s:e]))
    return segments


# ─── Loss functions ───────────────────────────────────────────────────────────

def squared_error(out: Tensor, target: np.ndarray) -> Tensor:
    """Per-frame squared error, summed over dims and averaged over frames."""
    if out.shape != target.T.shape:
        raise ShapeError(f"output {out.shape} does not match target {target.T.shape}")
    return mul(tensor_sum(square(sub(out, target.T))), 1.0 / target.shape[0])


class _WindowCache:
    def __init__(self, windows: WindowSet):
        self.windows = windows
        self._by_length: dict[int, WindowMatrix] = {}

    def __call__(self, T: int) -> WindowMatrix:
        if T not in self._by_length:
            self._by_length[T] = build_window_matrix(T, self.windows)
        return self._by_length[T]


# ─── Training ─────────────────────────────────────────────────────────────────

def train(
    corpus: Corpus,
    train_cfg: TrainConfig | None = None,
    model_cfg: ModelConfig | None = None,
    feature_cfg: FeatureConfig | None = None,
    on_epoch=None,
    windows: WindowSet | None = None,
) -> TrainResult:
    """
    Train a model on the corpus. on_epoch(epoch, loss) is called after
    every epoch. Returns the checkpoint and the per-epoch mean segment loss.
    """
    train_cfg = train_cfg or TrainConfig()
    train_cfg.validate()
    feature_cfg = feature_cfg or FeatureConfig()
    windows = windows or WindowSet()
    if len(corpus) == 0:
        raise CorpusError("cannot train on an empty corpus")

    layout = corpus.layout
    cfg = resolve_model_config(model_cfg or ModelConfig(), feature_cfg, layout.dim)
    model = build_model(train_cfg.mode, cfg, train_cfg.seed)
    length = train_cfg.segment_frames or cfg.segment_frames
    if length < model.min_frames:
        raise ConfigError(f"segment length {length} is below the back-end minimum of {model.min_frames} frames")

    contexts, pitch_tracks = _raw_inputs(corpus, feature_cfg)
    statics = [item.features for item in corpus.items]
    stats = fit_norm_stats(contexts, statics, pitch_tracks)
    inputs = [np.clip(normalize(x, stats, "input"), *INPUT_RANGE) for x in contexts]
    pitches = [np.clip(stats.normalize_pitch(p), *INPUT_RANGE) for p in pitch_tracks]
    window_for = _WindowCache(windows)

    target_min = target_max = None
    if train_cfg.mode == "proposed":
        targets = [normalize(y, stats, "output") for y in statics]
        cov = fit_covariance(targets, windows, train_cfg.trajectory_variance_floor)
    else:
        raw_o = [expand_trajectory(y, window_for(y.shape[0])) for y in statics]
        stacked = np.concatenate(raw_o, axis=0)
        target_min, target_max = stacked.min(axis=0), stacked.max(axis=0)
        targets = [scale_to_range(o, target_min, target_max, OUTPUT_RANGE) for o in raw_o]
        cov = TiedCovariance(np.maximum(stacked.var(axis=0), train_cfg.variance_floor), train_cfg.variance_floor)

    segments = _cut(corpus, inputs, pitches, targets, length, model.min_frames)
    run = f"{train_cfg.mode}:{corpus.provenance}"
    log.info(
        f"Training {train_cfg.mode} model: {len(corpus)} item(s), {len(segments)} segment(s) of ≤{length} "
        f"frames, {model.params.parameter_count()} parameters, {train_cfg.epochs} epoch(s)"
    )
    run_log.log_event(run, "start", f"segments={len(segments)} epochs={train_cfg.epochs} seed={train_cfg.seed}")

    rng = np.random.default_rng(np.random.SeedSequence(train_cfg.seed).spawn(1)[0])
    optimizer = Adam(model.params, train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
    losses: list[float] = []
    report_every = max(1, train_cfg.epochs // 10)

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(segments))
        acc = ResidualAccumulator()
        total = 0.0
        for idx in order:
            seg = segments[idx]
            model.params.zero_grad()
            out = model.forward(seg.frames, seg.pitch, training=True, rng=rng)
            if train_cfg.mode == "proposed":
                W = window_for(seg.length)
                loss = trajectory_nll(out, seg.target, cov, W)
            else:
                loss = squared_error(out, seg.target)
            value = float(loss.data)
            if not math.isfinite(value):
                _abort(run, model, epoch, seg, value)
            loss.backward()
            if train_cfg.mode == "proposed":
                acc.add(trajectory_residuals(out.data.T, seg.target, W))
            optimizer.step()
            total += value

        epoch_loss = total / len(segments)
        losses.append(epoch_loss)
        if train_cfg.mode == "proposed":
            cov = update_tied_covariance(acc, train_cfg.trajectory_variance_floor)
        detail = f"mean_var={float(cov.variances.mean()):.3e}" if train_cfg.mode == "proposed" else ""
        run_log.log_epoch(run, epoch, epoch_loss, detail)
        if epoch % report_every == 0 or epoch == train_cfg.epochs - 1:
            log.info(f"Epoch {epoch + 1}/{train_cfg.epochs}: loss {epoch_loss:.4f}")
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)

    ckpt = ModelCheckpoint(
        kind=train_cfg.mode,
        model_cfg=cfg,
        feature_cfg=feature_cfg,
        layout=layout,
        stats=stats,
        params=model.params.state_dict(),
        covariance=cov,
        target_min=target_min,
        target_max=target_max,
        rng_state=rng.bit_generator.state,
        history=losses,
    )
    run_log.log_event(run, "done", f"final_loss={losses[-1]:.6f}" if losses else "no epochs")
    return TrainResult(checkpoint=ckpt, losses=losses)


def _abort(run: str, model: AcousticModel, epoch: int, seg: TrainingSegment, value: float):
    largest = max(float(np.max(np.abs(p.data))) for _, p in model.params.items())
    detail = (
        f"non-finite loss {value!r} at epoch {epoch}, segment {seg.item}[{seg.start}:{seg.end}]; "
        f"largest |parameter| {largest:.3e}"
    )
    run_log.log_event(run, "abort", detail)
    raise NumericalError(detail)