"""
Maximum-likelihood parameter generation.

For each feature dimension, solves (Wᵀ Σ⁻¹ W) c = Wᵀ Σ⁻¹ μ for the static
trajectory c, given per-frame means μ and variances Σ over (static, Δ¹, Δ²).
The normal matrix is symmetric positive definite and banded; it is kept in
LAPACK lower band storage, band[k, j] = A[j + k, j], and factored with
scipy's banded Cholesky.
"""

import logging
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .errors import IndefiniteMatrixError, NumericalError, ShapeError
from .trajectory import WindowMatrix, WindowSet, frames_to_rows, build_window_matrix

log = logging.getLogger("MLPG")


@dataclass
class GenerationProblem:
    means: np.ndarray          # T × 3D, o-space
    variances: np.ndarray      # T × 3D, strictly positive
    windows: WindowSet = field(default_factory=WindowSet)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.variances.ndim == 1:
            self.variances = np.broadcast_to(self.variances, self.means.shape).copy()
        if self.means.ndim != 2 or self.means.shape != self.variances.shape:
            raise ShapeError(f"means {self.means.shape} and variances {self.variances.shape} differ")
        if self.means.shape[1] % self.windows.count:
            raise ShapeError(f"{self.means.shape[1]} o-space columns are not a multiple of {self.windows.count} windows")
        if not np.all(self.variances > 0):
            raise NumericalError("generation variances must be strictly positive")

    @property
    def frames(self) -> int:
        return self.means.shape[0]

    @property
    def static_dim(self) -> int:
        return self.means.shape[1] // self.windows.count


# ─── Band helpers ─────────────────────────────────────────────────────────────

def dense_to_band(A: np.ndarray, half_bandwidth: int) -> np.ndarray:
    n = A.shape[-1]
    band = np.zeros(A.shape[:-2] + (half_bandwidth + 1, n))
    for k in range(half_bandwidth + 1):
        band[..., k, :n - k] = np.diagonal(A, offset=-k, axis1=-2, axis2=-1)
    return band


def band_to_dense(band: np.ndarray) -> np.ndarray:
    p1, n = band.shape[-2:]
    A = np.zeros(band.shape[:-2] + (n, n))
    idx = np.arange(n)
    for k in range(p1):
        rows, cols = idx[k:], idx[:n - k]
        A[..., rows, cols] = band[..., k, :n - k]
        A[..., cols, rows] = band[..., k, :n - k]
    return A


def banded_spd_solve(band: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve A x = rhs for SPD A in lower band storage. Leading axes of band
    and rhs are batch axes, one system each.
    """
    band = np.asarray(band, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if band.shape[:-2] != rhs.shape[:-1] or band.shape[-1] != rhs.shape[-1]:
        raise ShapeError(f"band {band.shape} and right-hand side {rhs.shape} do not match")

    flat_band = band.reshape((-1,) + band.shape[-2:])
    flat_rhs = rhs.reshape(-1, rhs.shape[-1])
    out = np.empty_like(flat_rhs)
    for i in range(flat_band.shape[0]):
        try:
            factor = cholesky_banded(flat_band[i], lower=True)
        except LinAlgError as e:
            match = re.search(r"(\d+)", str(e))
            pivot = int(match.group(1)) - 1 if match else -1
            raise IndefiniteMatrixError(
                f"matrix is not positive definite: non-positive pivot at index {pivot}", pivot
            ) from e
        out[i] = cho_solve_banded((factor, True), flat_rhs[i])
    return out.reshape(rhs.shape)


# ─── Normal equations ─────────────────────────────────────────────────────────

def normal_equations(p: GenerationProblem, W: WindowMatrix | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Returns (band, rhs): band is D × (2L + 1) × T lower storage of Wᵀ Σ⁻¹ W
    per dimension, rhs is D × T.
    """
    W = W or build_window_matrix(p.frames, p.windows)
    D, T = p.static_dim, p.frames
    precision = frames_to_rows(1.0 / p.variances, W)        # (3T, D)
    weighted = precision * frames_to_rows(p.means, W)

    half = 2 * W.bandwidth
    band = np.zeros((D, half + 1, T))
    width = W.cols.shape[1]
    for s1 in range(width):
        for s2 in range(s1 + 1):
            c1, c2 = W.cols[:, s1], W.cols[:, s2]
            k = c1 - c2
            if np.any(k < 0) or np.any(k > half):
                raise ShapeError(f"normal matrix exceeds half-bandwidth {half}")
            contrib = precision * (W.coefs[:, s1] * W.coefs[:, s2])[:, None]   # (3T, D)
            for d in range(D):
                np.add.at(band[d], (k, c2), contrib[:, d])
    rhs = W.apply_transpose(weighted).T
    return band, rhs


def mlpg_generate(p: GenerationProblem) -> np.ndarray:
    """Maximum-likelihood static trajectory, T × D."""
    band, rhs = normal_equations(p)
    c = banded_spd_solve(band, rhs).T
    log.debug(f"MLPG: generated {p.frames} frames × {p.static_dim} dims")
    return c
