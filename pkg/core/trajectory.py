"""
Trajectory loss – window-matrix delta expansion and the Gaussian objective
with a globally tied diagonal covariance.

Row layout of W (3T × T per scalar track) is window-major: row k·T + t holds
window k at frame t. Expanded sequences are T × 3D with column k·D + d.
Frame references outside [0, T) are replicated from the nearest edge frame;
weights that land on the same column are merged.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .tensor import Tensor, add, as_tensor, mul, square, sub, tensor_sum

log = logging.getLogger("Trajectory")

VARIANCE_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)

DELTA1 = ((-1, -0.5), (1, 0.5))
DELTA2 = ((-1, 1.0), (0, -2.0), (1, 1.0))


# ─── Windows ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class WindowSet:
    windows: tuple[tuple[tuple[int, float], ...], ...] = (((0, 1.0),), DELTA1, DELTA2)

    def __post_init__(self):
        if not self.windows or tuple(self.windows[0]) != ((0, 1.0),):
            raise ShapeError("the first window must be the identity stencil {(0, 1)}")
        for k, stencil in enumerate(self.windows[1:], start=1):
            if abs(sum(c for _, c in stencil)) > 1e-12:
                raise ShapeError(f"window {k} coefficients must sum to zero")

    @property
    def count(self) -> int:
        return len(self.windows)

    @property
    def max_offset(self) -> int:
        return max(abs(o) for stencil in self.windows for o, _ in stencil)


@dataclass
class WindowMatrix:
    """
    Banded W. cols/coefs are (3T, width): per row the sorted column indices
    and merged weights, zero-weight padded on the right.
    """
    T: int
    n_windows: int
    cols: np.ndarray
    coefs: np.ndarray
    bandwidth: int        # largest |column − frame| over the stencils

    @property
    def rows(self) -> int:
        return self.n_windows * self.T

    def to_dense(self) -> np.ndarray:
        W = np.zeros((self.rows, self.T))
        for r in range(self.rows):
            for c, w in zip(self.cols[r], self.coefs[r]):
                W[r, c] += w
        return W

    def apply(self, c: np.ndarray) -> np.ndarray:
        """W @ c for a T × D static matrix, returned as (3T, D) rows."""
        acc = np.zeros((self.rows, c.shape[1]))
        for s in range(self.cols.shape[1]):
            acc += self.coefs[:, s, None] * c[self.cols[:, s]]
        return acc

    def apply_transpose(self, rows: np.ndarray) -> np.ndarray:
        """Wᵀ @ rows for (3T, D) rows, returned as T × D."""
        out = np.zeros((self.T, rows.shape[1]))
        for s in range(self.cols.shape[1]):
            np.add.at(out, self.cols[:, s], self.coefs[:, s, None] * rows)
        return out


def build_window_matrix(T: int, ws: WindowSet | None = None) -> WindowMatrix:
    if T < 1:
        raise ShapeError(f"window matrix needs T ≥ 1, got {T}")
    ws = ws or WindowSet()
    per_row: list[list[tuple[int, float]]] = []
    for stencil in ws.windows:
        for t in range(T):
            merged: dict[int, float] = {}
            for offset, coef in stencil:
                col = min(max(t + offset, 0), T - 1)
                merged[col] = merged.get(col, 0.0) + coef
            per_row.append(sorted(merged.items()))

    width = max(len(r) for r in per_row)
    cols = np.zeros((len(per_row), width), dtype=np.int64)
    coefs = np.zeros((len(per_row), width))
    for r, entries in enumerate(per_row):
        for s, (c, w) in enumerate(entries):
            cols[r, s] = c
            coefs[r, s] = w
        # padding slots point at the row's last column with weight 0
        if entries:
            cols[r, len(entries):] = entries[-1][0]
    return WindowMatrix(T=T, n_windows=ws.count, cols=cols, coefs=coefs, bandwidth=ws.max_offset)


def rows_to_frames(rows: np.ndarray, W: WindowMatrix) -> np.ndarray:
    D = rows.shape[1]
    return rows.reshape(W.n_windows, W.T, D).transpose(1, 0, 2).reshape(W.T, W.n_windows * D)


def frames_to_rows(o: np.ndarray, W: WindowMatrix) -> np.ndarray:
    D = o.shape[1] // W.n_windows
    return o.reshape(W.T, W.n_windows, D).transpose(1, 0, 2).reshape(W.rows, D)


def expand_trajectory(c: np.ndarray, W: WindowMatrix) -> np.ndarray:
    """T × D statics → T × 3D (static, Δ¹, Δ²) parameter sequence."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != W.T:
        raise ShapeError(f"expand_trajectory: {c.shape} statics for a {W.T}-frame window matrix")
    return rows_to_frames(W.apply(c), W)


def expand_tensor(c: Tensor, W: WindowMatrix) -> Tensor:
    """Differentiable expansion of a (D, T) tensor into a (3D, T) tensor."""
    if c.data.ndim != 2 or c.shape[1] != W.T:
        raise ShapeError(f"expand_tensor: {c.shape} tensor for a {W.T}-frame window matrix")
    o = expand_trajectory(c.data.T, W).T.copy()

    def backward(g):
        rows = frames_to_rows(g.T, W)
        return (W.apply_transpose(rows).T,)

    return Tensor(o, parents=(c,), backward=backward)


# ─── Covariance ───────────────────────────────────────────────────────────────

@dataclass
class TiedCovariance:
    """One variance per o-space coordinate, shared by every frame."""
    variances: np.ndarray
    floor: float = VARIANCE_FLOOR

    def __post_init__(self):
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.variances.ndim != 1:
            raise ShapeError("tied covariance needs a 1-D variance vector")
        if not np.all(np.isfinite(self.variances)) or np.any(self.variances <= 0):
            raise NumericalError("tied covariance has a non-positive or non-finite variance")
        self.variances = np.maximum(self.variances, self.floor)

    @classmethod
    def unit(cls, dim: int) -> "TiedCovariance":
        return cls(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.variances.shape[0]


@dataclass
class ResidualAccumulator:
    """Running sum of squared o-space residuals; merge is plain addition."""
    sum_sq: np.ndarray | None = None
    frames: int = 0

    def add(self, residuals: np.ndarray) -> None:
        sq = np.sum(residuals * residuals, axis=0)
        self.sum_sq = sq if self.sum_sq is None else self.sum_sq + sq
        self.frames += residuals.shape[0]

    def merge(self, other: "ResidualAccumulator") -> "ResidualAccumulator":
        if other.sum_sq is None:
            return ResidualAccumulator(None if self.sum_sq is None else self.sum_sq.copy(), self.frames)
        if self.sum_sq is None:
            return ResidualAccumulator(other.sum_sq.copy(), other.frames)
        return ResidualAccumulator(self.sum_sq + other.sum_sq, self.frames + other.frames)


def update_tied_covariance(acc: ResidualAccumulator, floor: float = VARIANCE_FLOOR) -> TiedCovariance:
    """Closed-form maximum-likelihood Σ for fixed predictions: mean squared residual."""
    if acc.sum_sq is None or acc.frames == 0:
        raise NumericalError("cannot update covariance: no residuals were accumulated")
    variances = np.maximum(acc.sum_sq / acc.frames, floor)
    return TiedCovariance(variances, floor)


def fit_covariance(sequences: list[np.ndarray], ws: WindowSet | None = None,
                   floor: float = VARIANCE_FLOOR) -> TiedCovariance:
    """Per-coordinate variance of the expanded sequences over all frames."""
    if not sequences:
        raise NumericalError("cannot fit covariance on no sequences")
    expanded = np.concatenate(
        [expand_trajectory(c, build_window_matrix(c.shape[0], ws)) for c in sequences], axis=0
    )
    return TiedCovariance(np.maximum(expanded.var(axis=0), floor), floor)


# ─── Objective ────────────────────────────────────────────────────────────────

def _check_cov(cov: TiedCovariance, D: int, n_windows: int) -> None:
    if cov.dim != n_windows * D:
        raise ShapeError(f"covariance has {cov.dim} variances, expected {n_windows * D}")


def trajectory_residuals(c_pred: np.ndarray, c_ref: np.ndarray, W: WindowMatrix) -> np.ndarray:
    """ō − o as T × 3D."""
    if c_pred.shape != c_ref.shape:
        raise ShapeError(f"prediction {c_pred.shape} and reference {c_ref.shape} differ")
    return expand_trajectory(c_ref, W) - expand_trajectory(c_pred, W)


def trajectory_nll(c_pred, c_ref: np.ndarray, cov: TiedCovariance, W: WindowMatrix) -> Tensor:
    """
    −log N(W c_ref ; W c_pred, Σ), differentiable in c_pred.

    c_pred is a (D, T) tensor (model output layout) or a T × D array;
    c_ref is always T × D.
    """
    if not isinstance(c_pred, Tensor):
        c_pred = as_tensor(np.asarray(c_pred, dtype=np.float64).T)
    c_ref = np.asarray(c_ref, dtype=np.float64)
    D, T = c_pred.shape
    if c_ref.shape != (T, D):
        raise ShapeError(f"reference {c_ref.shape} does not match prediction ({T}, {D})")
    _check_cov(cov, D, W.n_windows)

    o_ref = expand_trajectory(c_ref, W).T
    diff = sub(expand_tensor(c_pred, W), o_ref)
    precision = np.repeat((1.0 / cov.variances)[:, None], T, axis=1)
    quad = tensor_sum(mul(square(diff), precision))
    const = 0.5 * T * float(np.sum(np.log(cov.variances) + LOG_2PI))
    return add(mul(quad, 0.5), const)


def trajectory_nll_value(c_pred: np.ndarray, c_ref: np.ndarray, cov: TiedCovariance, W: WindowMatrix) -> float:
    r = trajectory_residuals(c_pred, c_ref, W)
    _check_cov(cov, c_pred.shape[1], W.n_windows)
    T = r.shape[0]
    quad = np.sum(r * r / cov.variances)
    return float(0.5 * quad + 0.5 * T * np.sum(np.log(cov.variances) + LOG_2PI))


def nll_from_residual_stats(acc: ResidualAccumulator, cov: TiedCovariance) -> float:
    """Epoch NLL for accumulated residuals under a given Σ."""
    if acc.sum_sq is None:
        raise NumericalError("no residuals accumulated")
    return float(0.5 * np.sum(acc.sum_sq / cov.variances)
                 + 0.5 * acc.frames * np.sum(np.log(cov.variances) + LOG_2PI))
