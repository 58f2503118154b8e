"""
Acoustic models – the two-part convolutional network and the frame-wise
feed-forward baseline.

ConvAcousticModel:
  front-end  F: stack of 1×1 convs (ReLU + dropout), applied frame by frame
  pitch      : normalized note log-F0 appended as one extra channel
  back-end   G: stride-2 down convs → residual blocks → stride-2 transposed
               up convs → width-n output conv → sigmoid

FeedForwardBaseline:
  the front-end shape alone, with a sigmoid 1×1 output layer over the
  static + Δ¹ + Δ² targets. Its outputs need MLPG to become a trajectory.

Public helpers take and return frames × dims arrays; the models work on
(channels, frames) tensors internally.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .score import ScoreFeatureSequence
from .tensor import (
    ParamStore, Tensor, add, concat_channels, conv1d, conv1d_transpose,
    crop_frames, dropout, glorot_uniform, pad_frames, relu, sigmoid,
)

log = logging.getLogger("Model")

MODEL_KINDS = ("proposed", "baseline")


# ─── Output layout ────────────────────────────────────────────────────────────

@dataclass
class AcousticLayout:
    """Named slices of an acoustic feature frame, in this order."""
    mgc: int = 50          # mel-cepstrum c(0)..c(M)
    lf0_diff: int = 1      # log F0 minus note log F0
    ap: int = 22           # band aperiodicity (carried, not vocoded)
    vibrato: int = 2       # amplitude (cents), frequency (Hz)
    flags: int = 2         # F0 value flag, vibrato value flag

    _ORDER = ("mgc", "lf0_diff", "ap", "vibrato", "flags")

    def __post_init__(self):
        if self.mgc < 1:
            raise ConfigError("layout needs at least one mel-cepstral coefficient")
        if self.lf0_diff != 1 or self.vibrato != 2 or self.flags != 2:
            raise ConfigError("layout: lf0_diff must be 1, vibrato 2 and flags 2")
        if self.ap < 0:
            raise ConfigError("layout: ap width must be ≥ 0")

    @property
    def dim(self) -> int:
        return sum(getattr(self, name) for name in self._ORDER)

    def slice_of(self, name: str) -> slice:
        start = 0
        for n in self._ORDER:
            width = getattr(self, n)
            if n == name:
                return slice(start, start + width)
            start += width
        raise KeyError(f"Unknown layout slice '{name}'")

    @property
    def lf0_index(self) -> int:
        return self.slice_of("lf0_diff").start

    @property
    def vuv_index(self) -> int:
        return self.slice_of("flags").start

    @property
    def vibrato_flag_index(self) -> int:
        return self.slice_of("flags").start + 1

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self._ORDER}

    @classmethod
    def from_dict(cls, d: dict) -> "AcousticLayout":
        return cls(**{k: int(v) for k, v in d.items() if k in cls._ORDER})


def interpolate_gaps(values: np.ndarray, present: np.ndarray, default: float = 0.0) -> np.ndarray:
    """
    Fill frames where present is False by linear interpolation between the
    surrounding present frames. Leading/trailing gaps hold the nearest value.
    """
    values = np.asarray(values, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    if values.shape != present.shape:
        raise ShapeError(f"interpolate_gaps: {values.shape} values vs {present.shape} mask")
    if not present.any():
        return np.full_like(values, default)
    idx = np.arange(values.shape[0])
    return np.interp(idx, idx[present], values[present])


@dataclass
class AcousticFrameSequence:
    frames: np.ndarray                     # T × D
    layout: AcousticLayout = field(default_factory=AcousticLayout)
    normalized: bool = True

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.layout.dim:
            raise ShapeError(f"acoustic frames {self.frames.shape} do not match layout width {self.layout.dim}")

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    def part(self, name: str) -> np.ndarray:
        return self.frames[:, self.layout.slice_of(name)]


# ─── Configuration ────────────────────────────────────────────────────────────

@dataclass
class ModelConfig:
    input_dim: int = 0                 # filled from FeatureConfig when 0
    frontend_layers: int = 3
    frontend_width: int = 256
    dropout_p: float = 0.2
    n_down: int = 2                    # stride-2 convs
    n_residual: int = 9
    n_up: int = 2                      # stride-2 transposed convs
    kernel_width: int = 3
    backend_width: int = 256
    output_dim: int = 77               # AcousticLayout().dim
    segment_frames: int = 2000
    overlap_frames: int = 100

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ConfigError("model.input_dim must be ≥ 1")
        if self.output_dim < 1:
            raise ConfigError("model.output_dim must be ≥ 1")
        if self.frontend_layers < 1 or self.frontend_width < 1 or self.backend_width < 1:
            raise ConfigError("model layer counts and widths must be ≥ 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"model.dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.n_down < 1 or self.n_up != self.n_down:
            raise ConfigError(
                f"model needs n_down ≥ 1 and n_up == n_down so up-sampling undoes "
                f"down-sampling (got {self.n_down}/{self.n_up})"
            )
        if self.n_residual < 0 or self.kernel_width < 1:
            raise ConfigError("model.n_residual must be ≥ 0 and kernel_width ≥ 1")
        if self.segment_frames < self.total_stride:
            raise ConfigError(f"model.segment_frames must be ≥ {self.total_stride}")
        if not 0 <= self.overlap_frames < self.segment_frames:
            raise ConfigError("model.overlap_frames must be in [0, segment_frames)")

    @property
    def total_stride(self) -> int:
        return 2 ** self.n_down

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            log.warning(f"ModelConfig: ignoring unknown keys {sorted(unknown)}")
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def receptive_radius(cfg: ModelConfig) -> int:
    """
    Upper bound, in input frames, on how far a perturbation can travel
    through the back-end. Each layer adds its full kernel extent at the
    current frame stride, plus one stride of grid misalignment per rescale.
    """
    K = cfg.kernel_width
    radius = 0
    stride = 1
    for _ in range(cfg.n_down):
        radius += (K - 1) * stride + stride
        stride *= 2
    radius += 2 * cfg.n_residual * (K - 1) * stride
    for _ in range(cfg.n_up):
        radius += K * stride
        stride //= 2
    radius += K - 1
    return radius


# ─── Models ───────────────────────────────────────────────────────────────────

class AcousticModel(ABC):
    """Shared interface of the proposed network and the baseline."""

    kind: str = ""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.params = ParamStore()
        self._build(np.random.default_rng(seed))
        log.debug(f"{self.kind} model: {self.params.parameter_count()} parameters")

    @abstractmethod
    def _build(self, rng: np.random.Generator) -> None:
        ...

    @property
    @abstractmethod
    def output_channels(self) -> int:
        ...

    @abstractmethod
    def forward(
        self,
        frames: np.ndarray,
        pitch: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """frames T × D_in and normalized pitch (T,) → (output_channels, T) tensor."""
        ...

    @property
    def min_frames(self) -> int:
        return 1

    def predict(self, frames: np.ndarray, pitch: np.ndarray) -> np.ndarray:
        """Eval-mode forward, returned as T × output_channels."""
        return self.forward(frames, pitch, training=False).data.T.copy()

    # ─── Shared layers ────────────────────────────────────────────────────────

    def _add_conv(self, name: str, c_out: int, c_in: int, k: int, rng: np.random.Generator) -> None:
        self.params.add(f"{name}.w", glorot_uniform((c_out, c_in, k), rng))
        self.params.add(f"{name}.b", np.zeros(c_out))

    def _build_frontend(self, rng: np.random.Generator, in_dim: int) -> None:
        width_in = in_dim
        for i in range(self.cfg.frontend_layers):
            self._add_conv(f"front.{i}", self.cfg.frontend_width, width_in, 1, rng)
            width_in = self.cfg.frontend_width

    def frontend(self, x: Tensor, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        for i in range(self.cfg.frontend_layers):
            x = conv1d(x, self.params[f"front.{i}.w"], self.params[f"front.{i}.b"])
            x = relu(x)
            x = dropout(x, self.cfg.dropout_p, training, rng)
        return x

    def _check_input(self, frames: np.ndarray, pitch: np.ndarray, in_dim: int) -> None:
        if frames.ndim != 2 or frames.shape[1] != in_dim:
            raise ShapeError(f"model input has shape {frames.shape}, expected T × {in_dim}")
        if pitch.shape != (frames.shape[0],):
            raise ShapeError(f"pitch track length {pitch.shape} does not match {frames.shape[0]} frames")


class ConvAcousticModel(AcousticModel):

    kind = "proposed"

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        K, C = cfg.kernel_width, cfg.backend_width
        self._build_frontend(rng, cfg.input_dim)
        c_in = cfg.frontend_width + 1
        for j in range(cfg.n_down):
            self._add_conv(f"back.down.{j}", C, c_in, K, rng)
            c_in = C
        for r in range(cfg.n_residual):
            self._add_conv(f"back.res.{r}.a", C, C, K, rng)
            self._add_conv(f"back.res.{r}.b", C, C, K, rng)
        for j in range(cfg.n_up):
            # transposed kernels are (C_in, C_out, K)
            self.params.add(f"back.up.{j}.w", glorot_uniform((C, C, K), rng))
            self.params.add(f"back.up.{j}.b", np.zeros(C))
        self._add_conv("back.out", cfg.output_dim, C, K, rng)

    @property
    def output_channels(self) -> int:
        return self.cfg.output_dim

    @property
    def min_frames(self) -> int:
        return self.cfg.total_stride

    def residual_block(self, x: Tensor, index: int) -> Tensor:
        p = self.params
        h = relu(conv1d(x, p[f"back.res.{index}.a.w"], p[f"back.res.{index}.a.b"]))
        h = conv1d(h, p[f"back.res.{index}.b.w"], p[f"back.res.{index}.b.b"])
        return add(x, h)

    def backend(self, x: Tensor) -> Tensor:
        """(H+1, T) → (D, T) with values in (0, 1)."""
        cfg, p = self.cfg, self.params
        T = x.shape[1]
        if T < cfg.total_stride:
            raise ShapeError(f"back-end needs at least {cfg.total_stride} frames, got {T}")
        padded = -(-T // cfg.total_stride) * cfg.total_stride
        x = pad_frames(x, padded - T)
        for j in range(cfg.n_down):
            x = relu(conv1d(x, p[f"back.down.{j}.w"], p[f"back.down.{j}.b"], stride=2))
        for r in range(cfg.n_residual):
            x = self.residual_block(x, r)
        for j in range(cfg.n_up):
            x = relu(conv1d_transpose(x, p[f"back.up.{j}.w"], p[f"back.up.{j}.b"], stride=2))
        x = conv1d(x, p["back.out.w"], p["back.out.b"])
        return sigmoid(crop_frames(x, T))

    def forward(self, frames, pitch, training=False, rng=None) -> Tensor:
        self._check_input(frames, pitch, self.cfg.input_dim)
        h = self.frontend(Tensor(frames.T), training, rng)
        return self.backend(append_pitch(h, pitch))


class FeedForwardBaseline(AcousticModel):
    """Frame-wise network over [context, pitch] predicting static + Δ¹ + Δ² means."""

    kind = "baseline"

    def _build(self, rng: np.random.Generator) -> None:
        self._build_frontend(rng, self.cfg.input_dim + 1)
        self._add_conv("out", self.output_channels, self.cfg.frontend_width, 1, rng)

    @property
    def output_channels(self) -> int:
        return 3 * self.cfg.output_dim

    def forward(self, frames, pitch, training=False, rng=None) -> Tensor:
        self._check_input(frames, pitch, self.cfg.input_dim)
        x = Tensor(np.vstack([frames.T, pitch[None, :]]))
        h = self.frontend(x, training, rng)
        return sigmoid(conv1d(h, self.params["out.w"], self.params["out.b"]))


def build_model(kind: str, cfg: ModelConfig, seed: int = 0) -> AcousticModel:
    if kind == "proposed":
        return ConvAcousticModel(cfg, seed)
    if kind == "baseline":
        return FeedForwardBaseline(cfg, seed)
    raise ConfigError(f"Unknown model kind '{kind}' (expected one of {', '.join(MODEL_KINDS)})")


# ─── Frame-major helpers ──────────────────────────────────────────────────────

def append_pitch(h: Tensor, pitch: np.ndarray) -> Tensor:
    if pitch.shape != (h.shape[1],):
        raise ShapeError(f"pitch track has {pitch.shape[0]} frames, intermediate has {h.shape[1]}")
    return concat_channels([h, Tensor(pitch[None, :])])


def frontend_forward(model: ConvAcousticModel, frames: np.ndarray) -> np.ndarray:
    """Eval-mode front-end: T × D_in → T × H."""
    if frames.ndim != 2 or frames.shape[1] != model.cfg.input_dim:
        raise ShapeError(f"front-end input has shape {frames.shape}, expected T × {model.cfg.input_dim}")
    return model.frontend(Tensor(frames.T)).data.T.copy()


def concat_note_pitch(intermediate: np.ndarray, pitch: np.ndarray) -> np.ndarray:
    """T × H, (T,) → T × (H + 1) with the pitch track as the last column."""
    pitch = np.asarray(pitch, dtype=np.float64)
    if intermediate.ndim != 2 or pitch.shape != (intermediate.shape[0],):
        raise ShapeError(f"cannot append pitch of shape {pitch.shape} to {intermediate.shape}")
    return np.hstack([intermediate, pitch[:, None]])


def backend_forward(model: ConvAcousticModel, x: np.ndarray) -> np.ndarray:
    """T × (H + 1) → T × D, in (0, 1)."""
    if x.ndim != 2 or x.shape[1] != model.cfg.frontend_width + 1:
        raise ShapeError(f"back-end input has shape {x.shape}, expected T × {model.cfg.frontend_width + 1}")
    return model.backend(Tensor(x.T)).data.T.copy()


def model_forward(model: AcousticModel, s: ScoreFeatureSequence, layout: AcousticLayout | None = None):
    """
    Eval-mode forward over a whole feature sequence. The proposed model
    returns an AcousticFrameSequence; the baseline returns its raw
    T × 3D o-space means.
    """
    if s.pitch is None:
        raise ShapeError("score features carry no normalized pitch track")
    out = model.predict(s.frames, s.pitch)
    if model.kind == "baseline":
        return out
    if layout is None:
        layout = default_layout(out.shape[1])
    return AcousticFrameSequence(frames=out, layout=layout)


def default_layout(dim: int) -> AcousticLayout:
    """Standard layout when it fits, otherwise everything beyond the fixed slices is mel-cepstrum."""
    if dim == AcousticLayout().dim:
        return AcousticLayout()
    fixed = 1 + 2 + 2
    if dim <= fixed:
        raise ShapeError(f"output width {dim} is too small for an acoustic layout")
    return AcousticLayout(mgc=dim - fixed, ap=0)
