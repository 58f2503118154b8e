"""Training loop: segmentation, determinism, both model kinds and failure handling."""

import math

import numpy as np
import pytest

import core.trainer as trainer_module
from conftest import SMALL_LAYOUT, make_tiny_model_cfg
from core import run_log
from core.corpus import Corpus
from core.errors import ConfigError, CorpusError, NumericalError, ShapeError
from core.model import build_model
from core.score import FeatureConfig
from core.tensor import Tensor
from core.trainer import (
    TRAJECTORY_VARIANCE_FLOOR, TrainConfig, resolve_model_config, segment_ranges, squared_error, train,
)


class TestSegmentRanges:

    def test_even_split(self):
        assert segment_ranges(12, 4) == [(0, 4), (4, 8), (8, 12)]

    def test_short_tail_kept(self):
        assert segment_ranges(10, 4) == [(0, 4), (4, 8), (8, 10)]

    def test_short_tail_merged(self):
        assert segment_ranges(10, 4, min_frames=3) == [(0, 4), (4, 10)]

    def test_single_short_utterance(self):
        assert segment_ranges(3, 40, min_frames=2) == [(0, 3)]

    def test_errors(self):
        with pytest.raises(ConfigError):
            segment_ranges(10, 0)
        with pytest.raises(ShapeError):
            segment_ranges(1, 4, min_frames=2)


class TestConfig:

    @pytest.mark.parametrize("kwargs", [
        {"epochs": -1}, {"mode": "wavenet"}, {"learning_rate": 0.0}, {"beta2": 1.0},
        {"segment_frames": 0}, {"variance_floor": 0.0}, {"trajectory_variance_floor": -1.0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs).validate()

    def test_from_dict(self, caplog):
        cfg = TrainConfig.from_dict({"epochs": 5, "mode": "baseline", "momentum": 0.9})
        assert cfg.epochs == 5 and cfg.mode == "baseline"
        assert "momentum" in caplog.text

    def test_resolve_model_config(self, tiny_model_cfg):
        cfg = resolve_model_config(make_tiny_model_cfg(input_dim=0, output_dim=77), FeatureConfig(), 13)
        assert cfg.input_dim == 18 and cfg.output_dim == 13
        with pytest.raises(ConfigError):
            resolve_model_config(make_tiny_model_cfg(input_dim=5), FeatureConfig(), 13)

    def test_squared_error(self):
        out = Tensor(np.array([[1.0, 2.0], [0.0, 0.0]]))   # C × T
        target = np.array([[0.0, 0.0], [0.0, 1.0]])        # T × C
        # frame 0: 1², frame 1: 2² + 1², averaged over 2 frames
        assert float(squared_error(out, target).data) == pytest.approx(3.0)
        with pytest.raises(ShapeError):
            squared_error(out, np.zeros((3, 2)))


class TestTraining:

    def test_zero_epochs_returns_initialization(self, small_corpus):
        result = train(small_corpus, TrainConfig(epochs=0, seed=5), make_tiny_model_cfg())
        assert result.losses == []
        assert math.isnan(result.final_loss)
        init = build_model("proposed", make_tiny_model_cfg(), seed=5).params.state_dict()
        for name, value in init.items():
            np.testing.assert_array_equal(result.checkpoint.params[name], value)
        assert result.checkpoint.covariance.dim == 39

    def test_same_seed_same_run(self, small_corpus):
        cfg = TrainConfig(epochs=2, seed=9)
        a = train(small_corpus, cfg, make_tiny_model_cfg(dropout_p=0.2))
        b = train(small_corpus, cfg, make_tiny_model_cfg(dropout_p=0.2))
        assert a.losses == b.losses
        for name in a.checkpoint.params:
            np.testing.assert_array_equal(a.checkpoint.params[name], b.checkpoint.params[name])
        assert a.checkpoint.rng_state == b.checkpoint.rng_state

    @pytest.mark.slow
    def test_loss_decreases(self, small_corpus):
        seen = []
        result = train(
            small_corpus, TrainConfig(epochs=12, learning_rate=3e-3, seed=2), make_tiny_model_cfg(),
            on_epoch=lambda epoch, loss: seen.append(epoch),
        )
        assert seen == list(range(12))
        assert all(np.isfinite(result.losses))
        assert result.losses[-1] < result.losses[0]
        assert result.checkpoint.history == result.losses
        assert result.checkpoint.kind == "proposed"
        assert result.checkpoint.target_min is None

    def test_baseline_mode(self, trained):
        result = trained["baseline"]
        ckpt = result.checkpoint
        assert ckpt.kind == "baseline"
        assert ckpt.target_min.shape == (39,) and ckpt.target_max.shape == (39,)
        assert ckpt.covariance.dim == 39
        assert np.all(ckpt.target_max >= ckpt.target_min)
        assert len(result.losses) == 3 and all(np.isfinite(result.losses))

    def test_proposed_covariance_tracks_residuals(self, trained):
        ckpt = trained["proposed"].checkpoint
        assert ckpt.layout == SMALL_LAYOUT
        assert ckpt.covariance.floor == TRAJECTORY_VARIANCE_FLOOR
        assert np.all(ckpt.covariance.variances >= TRAJECTORY_VARIANCE_FLOOR)
        assert ckpt.epochs == 3

    def test_segment_below_model_minimum(self, small_corpus):
        with pytest.raises(ConfigError):
            train(small_corpus, TrainConfig(epochs=1, segment_frames=1), make_tiny_model_cfg())

    def test_empty_corpus(self):
        with pytest.raises(CorpusError):
            train(Corpus(items=[], layout=SMALL_LAYOUT), TrainConfig(epochs=1), make_tiny_model_cfg())

    def test_non_finite_loss_aborts(self, small_corpus, monkeypatch):
        monkeypatch.setattr(trainer_module, "trajectory_nll", lambda *args: Tensor(np.array(np.nan)))
        with pytest.raises(NumericalError, match="non-finite loss") as info:
            train(small_corpus, TrainConfig(epochs=1), make_tiny_model_cfg())
        assert "song00" in str(info.value)
        assert info.value.exit_code == 3

    def test_run_log_file(self, small_corpus, tmp_path):
        path = run_log.configure(tmp_path)
        try:
            train(small_corpus, TrainConfig(epochs=2, seed=4), make_tiny_model_cfg())
        finally:
            run_log.close()
        lines = path.read_text(encoding="utf-8").splitlines()
        assert any("| START |" in line for line in lines)
        assert any(" | 1 | " in line for line in lines)
        assert any("| DONE |" in line for line in lines)
