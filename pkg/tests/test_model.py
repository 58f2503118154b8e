"""Acoustic layout, model shapes, locality and end-to-end gradient integrity."""

import numpy as np
import pytest

import core.model as model_module
from core.errors import ConfigError, ShapeError
from core.model import (
    AcousticFrameSequence, AcousticLayout, ConvAcousticModel, FeedForwardBaseline, ModelConfig,
    backend_forward, build_model, concat_note_pitch, default_layout, frontend_forward,
    interpolate_gaps, model_forward, receptive_radius,
)
from core.score import build_score_features, encode_contexts, fit_norm_stats, interpolate_note_logf0
from core.trajectory import TiedCovariance, build_window_matrix, trajectory_nll


def _inputs(rng, T, cfg):
    return rng.random((T, cfg.input_dim)), rng.random(T)


class TestLayout:

    def test_default_layout(self):
        layout = AcousticLayout()
        assert layout.dim == 77
        assert layout.slice_of("mgc") == slice(0, 50)
        assert layout.lf0_index == 50
        assert layout.slice_of("ap") == slice(51, 73)
        assert layout.vuv_index == 75
        assert layout.vibrato_flag_index == 76

    def test_round_trip(self, small_layout):
        assert AcousticLayout.from_dict(small_layout.to_dict()) == small_layout

    @pytest.mark.parametrize("kwargs", [{"mgc": 0}, {"vibrato": 1}, {"ap": -1}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            AcousticLayout(**kwargs)

    def test_unknown_slice(self, small_layout):
        with pytest.raises(KeyError):
            small_layout.slice_of("energy")

    def test_default_layout_for_width(self):
        assert default_layout(77) == AcousticLayout()
        assert default_layout(13) == AcousticLayout(mgc=8, ap=0)
        with pytest.raises(ShapeError):
            default_layout(5)

    def test_frame_sequence_width_check(self, small_layout):
        with pytest.raises(ShapeError):
            AcousticFrameSequence(frames=np.zeros((4, 12)), layout=small_layout)

    def test_interpolate_gaps(self):
        values = np.array([0.0, 2.0, 0.0, 0.0, 8.0, 0.0])
        present = np.array([False, True, False, False, True, False])
        np.testing.assert_allclose(interpolate_gaps(values, present), [2, 2, 4, 6, 8, 8])
        np.testing.assert_array_equal(interpolate_gaps(values, np.zeros(6, bool), default=-1.0), -1.0)


class TestModelConfig:

    @pytest.mark.parametrize("overrides", [
        {"input_dim": 0},
        {"n_up": 2},
        {"dropout_p": 1.0},
        {"segment_frames": 1},
        {"overlap_frames": 40},
        {"kernel_width": 0},
    ])
    def test_rejects(self, tiny_model_cfg, overrides):
        cfg = ModelConfig(**{**tiny_model_cfg.to_dict(), **overrides})
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_from_dict_warns_on_unknown(self, tiny_model_cfg, caplog):
        cfg = ModelConfig.from_dict({**tiny_model_cfg.to_dict(), "attention": True})
        assert cfg == tiny_model_cfg
        assert "attention" in caplog.text

    def test_unknown_kind(self, tiny_model_cfg):
        with pytest.raises(ConfigError):
            build_model("transformer", tiny_model_cfg)


class TestShapes:

    @pytest.mark.parametrize("T", [2, 17, 40, 41])
    def test_proposed_any_length(self, rng, tiny_model_cfg, T):
        model = ConvAcousticModel(tiny_model_cfg, seed=1)
        out = model.predict(*_inputs(rng, T, tiny_model_cfg))
        assert out.shape == (T, 13)
        assert out.min() > 0.0 and out.max() < 1.0

    @pytest.mark.parametrize("T", [200, 400, 1000])
    def test_one_parameter_set_serves_every_segment_size(self, rng, tiny_model_cfg, T):
        cfg = ModelConfig(**{**tiny_model_cfg.to_dict(), "n_down": 2, "n_up": 2})
        model = ConvAcousticModel(cfg, seed=4)
        out = model.predict(*_inputs(rng, T, cfg))
        assert out.shape == (T, 13)
        assert np.all(np.isfinite(out))
        assert out.min() > 0.0 and out.max() < 1.0

    def test_proposed_too_short(self, rng, tiny_model_cfg):
        model = ConvAcousticModel(tiny_model_cfg)
        with pytest.raises(ShapeError):
            model.predict(*_inputs(rng, 1, tiny_model_cfg))

    def test_baseline_predicts_all_windows(self, rng, tiny_model_cfg):
        model = FeedForwardBaseline(tiny_model_cfg)
        out = model.predict(*_inputs(rng, 9, tiny_model_cfg))
        assert out.shape == (9, 39)

    def test_wrong_input_width(self, rng, tiny_model_cfg):
        model = build_model("proposed", tiny_model_cfg)
        with pytest.raises(ShapeError):
            model.predict(rng.random((8, 5)), rng.random(8))
        with pytest.raises(ShapeError):
            model.predict(rng.random((8, 18)), rng.random(7))

    def test_same_seed_same_parameters(self, tiny_model_cfg):
        a = build_model("proposed", tiny_model_cfg, seed=7).params.state_dict()
        b = build_model("proposed", tiny_model_cfg, seed=7).params.state_dict()
        c = build_model("proposed", tiny_model_cfg, seed=8).params.state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not all(np.array_equal(a[k], c[k]) for k in a)

    def test_frontend_is_framewise(self, rng, tiny_model_cfg):
        model = ConvAcousticModel(tiny_model_cfg, seed=6)
        frames = rng.random((30, tiny_model_cfg.input_dim))
        h = frontend_forward(model, frames)
        perm = rng.permutation(30)
        np.testing.assert_allclose(frontend_forward(model, frames[perm]), h[perm], rtol=0, atol=1e-12)
        frames[7] = frames[21]
        h = frontend_forward(model, frames)
        np.testing.assert_allclose(h[7], h[21], rtol=0, atol=1e-12)

    def test_split_forward_matches_predict(self, rng, tiny_model_cfg):
        model = ConvAcousticModel(tiny_model_cfg, seed=3)
        frames, pitch = _inputs(rng, 20, tiny_model_cfg)
        h = frontend_forward(model, frames)
        assert h.shape == (20, tiny_model_cfg.frontend_width)
        out = backend_forward(model, concat_note_pitch(h, pitch))
        np.testing.assert_allclose(out, model.predict(frames, pitch), rtol=0, atol=1e-12)

    def test_model_forward_on_score(self, score, feature_cfg, tiny_model_cfg, small_layout):
        raw = encode_contexts(score, feature_cfg)
        stats = fit_norm_stats([raw], [np.zeros((26, 13))], [interpolate_note_logf0(score)])
        s = build_score_features(score, feature_cfg, stats)
        seq = model_forward(build_model("proposed", tiny_model_cfg), s, small_layout)
        assert isinstance(seq, AcousticFrameSequence)
        assert seq.part("mgc").shape == (26, 6)
        raw_out = model_forward(build_model("baseline", tiny_model_cfg), s)
        assert raw_out.shape == (26, 39)


class TestLocality:

    def test_perturbation_stays_within_receptive_radius(self, rng, tiny_model_cfg):
        model = ConvAcousticModel(tiny_model_cfg, seed=2)
        frames, pitch = _inputs(rng, 80, tiny_model_cfg)
        base = model.predict(frames, pitch)
        frames2, pitch2 = frames.copy(), pitch.copy()
        frames2[40] += 0.5
        pitch2[40] += 0.3
        diff = np.abs(model.predict(frames2, pitch2) - base).max(axis=1)
        changed = np.nonzero(diff > 1e-12)[0]
        assert changed.size > 0
        assert np.all(np.abs(changed - 40) <= receptive_radius(tiny_model_cfg))

    def test_segment_interior_matches_full_sequence(self, rng, tiny_model_cfg):
        model = ConvAcousticModel(tiny_model_cfg, seed=2)
        frames, pitch = _inputs(rng, 100, tiny_model_cfg)
        full = model.predict(frames, pitch)
        part = model.predict(frames[20:80], pitch[20:80])
        r = receptive_radius(tiny_model_cfg)
        np.testing.assert_allclose(part[r:60 - r], full[20 + r:80 - r], rtol=0, atol=1e-10)


class TestGradientIntegrity:
    """Back-propagated gradients of the trajectory loss against central differences."""

    CFG = ModelConfig(
        input_dim=12, frontend_layers=2, frontend_width=16, dropout_p=0.0,
        n_down=1, n_residual=2, n_up=1, kernel_width=3, backend_width=8,
        output_dim=8, segment_frames=16, overlap_frames=0,
    )

    def test_full_model_gradients(self, rng, monkeypatch):
        # finite differences are meaningless where a ReLU changes state,
        # so entries whose ±h evaluations flip any activation are skipped
        patterns: list[bytes] = []
        real_relu = model_module.relu

        def recording_relu(x):
            patterns.append((x.data > 0).tobytes())
            return real_relu(x)

        monkeypatch.setattr(model_module, "relu", recording_relu)

        model = ConvAcousticModel(self.CFG, seed=11)
        frames, pitch = rng.random((16, 12)), rng.random(16)
        c_ref = rng.uniform(0.1, 0.9, size=(16, 8))
        W = build_window_matrix(16)
        cov = TiedCovariance(np.full(24, 0.5))

        def loss_and_pattern():
            patterns.clear()
            value = trajectory_nll(model.forward(frames, pitch), c_ref, cov, W)
            return value, tuple(patterns)

        model.params.zero_grad()
        loss, reference = loss_and_pattern()
        loss.backward()

        h = 1e-5
        checked = skipped = 0
        for name, p in model.params.items():
            picks = rng.choice(p.size, size=min(24, p.size), replace=False)
            for flat in picks:
                idx = np.unravel_index(flat, p.shape)
                old = p.data[idx]
                p.data[idx] = old + h
                fp, pat_p = loss_and_pattern()
                p.data[idx] = old - h
                fm, pat_m = loss_and_pattern()
                p.data[idx] = old
                if pat_p != reference or pat_m != reference:
                    skipped += 1
                    continue
                numeric = (float(fp.data) - float(fm.data)) / (2 * h)
                analytic = float(p.grad[idx])
                rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
                assert rel < 1e-5, f"{name}{idx}: analytic {analytic} vs numeric {numeric}"
                checked += 1

        assert checked >= 0.9 * (checked + skipped)
