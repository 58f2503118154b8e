"""Window matrix, delta expansion, trajectory likelihood and tied covariance."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from core.errors import NumericalError, ShapeError
from core.tensor import Tensor, mul, tensor_sum
from core.trajectory import (
    ResidualAccumulator, TiedCovariance, WindowSet, build_window_matrix, expand_tensor,
    expand_trajectory, fit_covariance, frames_to_rows, nll_from_residual_stats, rows_to_frames,
    trajectory_nll, trajectory_nll_value, trajectory_residuals, update_tied_covariance,
)


def _dense_expand(c: np.ndarray, W) -> np.ndarray:
    """Row-by-row accumulation over the dense window matrix, ascending column order."""
    dense = W.to_dense()
    T, D = c.shape
    rows = np.zeros((W.rows, D))
    for r in range(W.rows):
        for d in range(D):
            acc = 0.0
            for j in range(T):
                acc += dense[r, j] * c[j, d]
            rows[r, d] = acc
    return rows_to_frames(rows, W)


class TestWindowMatrix:

    def test_edge_rows_by_hand(self):
        dense = build_window_matrix(5).to_dense()
        np.testing.assert_array_equal(dense[:5], np.eye(5))
        np.testing.assert_array_equal(dense[5], [-0.5, 0.5, 0, 0, 0])      # Δ¹ at t=0
        np.testing.assert_array_equal(dense[7], [0, -0.5, 0, 0.5, 0])      # Δ¹ at t=2
        np.testing.assert_array_equal(dense[10], [-1, 1, 0, 0, 0])         # Δ² at t=0
        np.testing.assert_array_equal(dense[12], [0, 1, -2, 1, 0])
        np.testing.assert_array_equal(dense[14], [0, 0, 0, 1, -1])         # Δ² at t=T−1

    def test_single_frame_has_zero_deltas(self):
        W = build_window_matrix(1)
        np.testing.assert_array_equal(W.to_dense(), [[1.0], [0.0], [0.0]])

    def test_rejects_empty(self):
        with pytest.raises(ShapeError):
            build_window_matrix(0)

    def test_window_set_validation(self):
        with pytest.raises(ShapeError):
            WindowSet(windows=(((0, 2.0),),))
        with pytest.raises(ShapeError):
            WindowSet(windows=(((0, 1.0),), ((-1, -0.5), (1, 0.6))))

    def test_custom_windows(self, rng):
        ws = WindowSet(windows=(((0, 1.0),), ((-2, -1.0), (2, 1.0))))
        W = build_window_matrix(9, ws)
        assert W.n_windows == 2 and W.bandwidth == 2
        c = rng.normal(size=(9, 1))
        o = expand_trajectory(c, W)
        assert o.shape == (9, 2)
        assert o[4, 1] == c[6, 0] - c[2, 0]


class TestExpansion:

    def test_matches_dense_accumulation_bitwise(self, rng):
        W = build_window_matrix(12)
        c = rng.normal(size=(12, 3))
        np.testing.assert_array_equal(expand_trajectory(c, W), _dense_expand(c, W))

    @pytest.mark.parametrize("T", [1, 2, 3, 7, 20, 64])
    def test_matches_stencils_exactly(self, rng, T):
        ws = WindowSet()
        W = build_window_matrix(T, ws)
        c = rng.normal(size=(T, 2))
        expected = np.zeros((T, 3 * 2))
        for k, stencil in enumerate(ws.windows):
            for t in range(T):
                # edge replication: taps past either end read the edge frame
                taps: dict[int, float] = {}
                for offset, coef in stencil:
                    j = min(max(t + offset, 0), T - 1)
                    taps[j] = taps.get(j, 0.0) + coef
                acc = np.zeros(2)
                for j in sorted(taps):
                    acc = acc + taps[j] * c[j]
                expected[t, 2 * k:2 * k + 2] = acc
        o = expand_trajectory(c, W)
        np.testing.assert_array_equal(o, expected)
        np.testing.assert_array_equal(o, _dense_expand(c, W))

    def test_padded_stencils_on_a_dyadic_grid(self, rng):
        T, D = 33, 3
        c = rng.integers(-4096, 4096, size=(T, D)) / 256.0
        o = expand_trajectory(c, build_window_matrix(T))
        cp = np.vstack([c[:1], c, c[-1:]])
        np.testing.assert_array_equal(o[:, :D], c)
        np.testing.assert_array_equal(o[:, D:2 * D], -0.5 * cp[:-2] + 0.5 * cp[2:])
        np.testing.assert_array_equal(o[:, 2 * D:], cp[:-2] - 2.0 * cp[1:-1] + cp[2:])

    def test_constant_sequence_has_zero_deltas(self):
        c = np.full((7, 2), 3.25)
        o = expand_trajectory(c, build_window_matrix(7))
        np.testing.assert_array_equal(o[:, 2:], 0.0)

    def test_row_frame_reshapes_are_inverse(self, rng):
        W = build_window_matrix(6)
        o = rng.normal(size=(6, 9))
        np.testing.assert_array_equal(rows_to_frames(frames_to_rows(o, W), W), o)

    def test_transpose_is_adjoint(self, rng):
        W = build_window_matrix(11)
        c = rng.normal(size=(11, 2))
        r = rng.normal(size=(33, 2))
        assert np.sum(W.apply(c) * r) == pytest.approx(np.sum(c * W.apply_transpose(r)), rel=1e-12)

    def test_length_mismatch(self, rng):
        with pytest.raises(ShapeError):
            expand_trajectory(rng.normal(size=(5, 2)), build_window_matrix(6))

    def test_tensor_expansion_gradient(self, rng):
        W = build_window_matrix(8)
        c = Tensor(rng.normal(size=(2, 8)), requires_grad=True)
        g = rng.normal(size=(6, 8))
        tensor_sum(mul(expand_tensor(c, W), g)).backward()
        # linear map: gradient is Wᵀ applied to the upstream weights
        expected = W.apply_transpose(frames_to_rows(g.T, W)).T
        np.testing.assert_allclose(c.grad, expected, rtol=0, atol=1e-14)


class TestLikelihood:

    def test_matches_independent_gaussians(self, rng):
        T, D = 10, 2
        W = build_window_matrix(T)
        c_pred, c_ref = rng.normal(size=(T, D)), rng.normal(size=(T, D))
        cov = TiedCovariance(rng.uniform(0.2, 2.0, size=3 * D))
        expected = -np.sum(norm.logpdf(
            expand_trajectory(c_ref, W), loc=expand_trajectory(c_pred, W), scale=np.sqrt(cov.variances)
        ))
        assert float(trajectory_nll(c_pred, c_ref, cov, W).data) == pytest.approx(expected, rel=1e-12)
        assert trajectory_nll_value(c_pred, c_ref, cov, W) == pytest.approx(expected, rel=1e-12)

    def test_invariant_under_frame_reversal(self, rng):
        T, D = 15, 3
        W = build_window_matrix(T)
        c_pred, c_ref = rng.normal(size=(T, D)), rng.normal(size=(T, D))
        cov = TiedCovariance(rng.uniform(0.2, 2.0, size=3 * D))
        forward = trajectory_nll_value(c_pred, c_ref, cov, W)
        backward = trajectory_nll_value(c_pred[::-1].copy(), c_ref[::-1].copy(), cov, W)
        assert backward == pytest.approx(forward, rel=1e-12)
        as_loss = trajectory_nll(Tensor(c_pred[::-1].T.copy()), c_ref[::-1].copy(), cov, W)
        assert float(as_loss.data) == pytest.approx(forward, rel=1e-12)

    def test_perfect_prediction_leaves_constant(self, rng):
        c = rng.normal(size=(6, 1))
        cov = TiedCovariance(np.ones(3))
        value = trajectory_nll_value(c, c, cov, build_window_matrix(6))
        assert value == pytest.approx(0.5 * 6 * 3 * math.log(2 * math.pi))

    def test_gradient_against_finite_differences(self, rng):
        T, D = 9, 2
        W = build_window_matrix(T)
        c_ref = rng.normal(size=(T, D))
        cov = TiedCovariance(rng.uniform(0.3, 1.5, size=3 * D))
        c = Tensor(rng.normal(size=(D, T)), requires_grad=True)
        trajectory_nll(c, c_ref, cov, W).backward()

        h = 1e-6
        numeric = np.zeros((D, T))
        for i in np.ndindex(D, T):
            plus, minus = c.data.copy(), c.data.copy()
            plus[i] += h
            minus[i] -= h
            numeric[i] = (trajectory_nll_value(plus.T, c_ref, cov, W)
                          - trajectory_nll_value(minus.T, c_ref, cov, W)) / (2 * h)
        np.testing.assert_allclose(c.grad, numeric, rtol=1e-6, atol=1e-6)

    def test_shape_checks(self, rng):
        W = build_window_matrix(5)
        with pytest.raises(ShapeError):
            trajectory_nll(rng.normal(size=(5, 2)), rng.normal(size=(5, 3)), TiedCovariance.unit(6), W)
        with pytest.raises(ShapeError):
            trajectory_nll(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), TiedCovariance.unit(4), W)
        with pytest.raises(ShapeError):
            trajectory_residuals(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), W)


class TestCovariance:

    def _accumulate(self, rng, n_items=3):
        acc = ResidualAccumulator()
        for T in range(8, 8 + n_items):
            W = build_window_matrix(T)
            acc.add(trajectory_residuals(rng.normal(size=(T, 2)), rng.normal(size=(T, 2)), W))
        return acc

    def test_closed_form_is_mean_squared_residual(self, rng):
        acc = self._accumulate(rng)
        cov = update_tied_covariance(acc)
        np.testing.assert_allclose(cov.variances, acc.sum_sq / acc.frames)

    def test_closed_form_beats_every_grid_point(self, rng):
        acc = self._accumulate(rng)
        best = update_tied_covariance(acc)
        best_nll = nll_from_residual_stats(acc, best)
        # per-coordinate search around the closed form, refined on a log grid
        for j in range(best.dim):
            for factor in np.exp(np.linspace(-1.0, 1.0, 81)):
                v = best.variances.copy()
                v[j] *= factor
                assert nll_from_residual_stats(acc, TiedCovariance(v)) >= best_nll - 1e-9

    def test_update_never_increases_nll(self, rng):
        acc = self._accumulate(rng)
        start = TiedCovariance(rng.uniform(0.1, 5.0, size=6))
        assert nll_from_residual_stats(acc, update_tied_covariance(acc)) <= nll_from_residual_stats(acc, start)

    def test_floor(self):
        acc = ResidualAccumulator()
        acc.add(np.array([[0.0, 1.0], [0.0, -1.0]]))
        cov = update_tied_covariance(acc)
        np.testing.assert_array_equal(cov.variances, [1e-6, 1.0])

    def test_merge_is_addition(self, rng):
        a, b, both = ResidualAccumulator(), ResidualAccumulator(), ResidualAccumulator()
        ra, rb = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
        a.add(ra)
        b.add(rb)
        both.add(np.vstack([ra, rb]))
        merged = a.merge(b)
        assert merged.frames == 10
        np.testing.assert_allclose(merged.sum_sq, both.sum_sq)
        assert ResidualAccumulator().merge(a).frames == 4

    def test_empty_accumulator(self):
        with pytest.raises(NumericalError):
            update_tied_covariance(ResidualAccumulator())

    @pytest.mark.parametrize("bad", [[1.0, -1.0], [1.0, float("nan")], [0.0, 1.0]])
    def test_rejects_invalid_variances(self, bad):
        with pytest.raises(NumericalError):
            TiedCovariance(np.array(bad))

    def test_fit_covariance(self, rng):
        c = rng.normal(size=(15, 2))
        cov = fit_covariance([c])
        np.testing.assert_allclose(cov.variances, expand_trajectory(c, build_window_matrix(15)).var(axis=0))
