"""Acceptance-size training runs: overfit, held-out smoothness and continuity across segment joins."""

import numpy as np
import pytest

from core.evaluation import evaluate
from core.model import ModelConfig
from core.score import build_score_features
from core.synthesizer import generate_features, predict_segments
from core.synthetic import make_synthetic_corpus
from core.trainer import TrainConfig, train

pytestmark = pytest.mark.slow

SEGMENT = 240
EPOCHS = 500


def _model_cfg() -> ModelConfig:
    return ModelConfig(
        frontend_layers=3,
        frontend_width=64,
        dropout_p=0.0,
        n_down=2,
        n_residual=9,
        n_up=2,
        kernel_width=3,
        backend_width=64,
        segment_frames=SEGMENT,
        overlap_frames=40,
    )


def _within(ratio: float, factor: float = 2.0) -> bool:
    return 1.0 / factor <= ratio <= factor


@pytest.fixture(scope="module")
def corpus():
    return make_synthetic_corpus(1234, 2, 1200)


@pytest.fixture(scope="module")
def held_out():
    return make_synthetic_corpus(4321, 1, 1200)


@pytest.fixture(scope="module")
def proposed(corpus):
    return train(corpus, TrainConfig(epochs=EPOCHS, segment_frames=SEGMENT, seed=1234), _model_cfg())


@pytest.fixture(scope="module")
def baseline(corpus):
    cfg = TrainConfig(epochs=EPOCHS, segment_frames=SEGMENT, seed=1234, mode="baseline")
    return train(corpus, cfg, _model_cfg())


def test_proposed_overfits_the_training_songs(proposed, corpus):
    losses = proposed.losses
    assert len(losses) == EPOCHS
    assert losses[-1] <= losses[0] - 0.5 * abs(losses[0])
    report = evaluate(proposed.checkpoint, corpus, segment_frames=SEGMENT)
    assert report.mgc_relative_rms < 0.05


def test_held_out_smoothness(proposed, baseline, held_out):
    direct = evaluate(proposed.checkpoint, held_out, segment_frames=SEGMENT)
    generated = evaluate(baseline.checkpoint, held_out, segment_frames=SEGMENT)

    assert _within(direct.smoothness_pred / direct.smoothness_ref)
    assert _within(generated.smoothness_pred / generated.smoothness_ref)
    # mean |Δ¹| cannot tell a step from a ramp, so the frame-wise output is caught on |Δ²|
    assert generated.roughness_raw > 2.0 * generated.roughness_ref
    assert generated.roughness_pred < generated.roughness_raw


def test_segment_joins_are_continuous(proposed, held_out):
    ckpt = proposed.checkpoint
    s = build_score_features(held_out.items[0].score, ckpt.feature_cfg, ckpt.stats)
    feats = generate_features(ckpt, s, segment_frames=SEGMENT)
    assert len(feats.segments) > 2

    mgc = ckpt.layout.slice_of("mgc")
    outputs = predict_segments(ckpt.build_model(), s, feats.segments)
    within = np.concatenate([np.abs(np.diff(o[:, mgc], axis=0)) for o in outputs], axis=0)
    bound = 3.0 * np.percentile(within, 99, axis=0)

    stitched = feats.model_output[:, mgc]
    for (_, end), (start, _) in zip(feats.segments, feats.segments[1:]):
        steps = np.abs(np.diff(stitched[start - 1:end + 1], axis=0))
        assert np.all(steps.max(axis=0) <= bound)
