"""Shared fixtures: tiny model configs, hand-written scores, seeded generators."""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core.model import MODEL_KINDS, AcousticLayout, ModelConfig  # noqa: E402
from core.score import FeatureConfig, parse_score  # noqa: E402
from core.synthetic import make_synthetic_corpus  # noqa: E402
from core.trainer import TrainConfig, train  # noqa: E402


SMALL_LAYOUT = AcousticLayout(mgc=6, ap=2)     # 13 dims


SCORE_JSON = """
{"tempo_bpm": 120, "frame_shift_s": 0.005,
 "events": [
   {"kind": "rest", "start_frame": 0, "end_frame": 4, "phones": []},
   {"kind": "note", "midi": 69, "start_frame": 4, "end_frame": 14,
    "phones": [{"sym": "k", "start_frame": 4, "end_frame": 6},
               {"sym": "a", "start_frame": 6, "end_frame": 14}]},
   {"kind": "rest", "start_frame": 14, "end_frame": 18, "phones": []},
   {"kind": "note", "midi": 72, "start_frame": 18, "end_frame": 26,
    "phones": [{"sym": "o", "start_frame": 18, "end_frame": 26}]}
 ]}
"""


def make_tiny_model_cfg(**overrides) -> ModelConfig:
    """Small enough for finite differences and quick training runs."""
    cfg = dict(
        input_dim=FeatureConfig().input_dim,
        frontend_layers=2,
        frontend_width=8,
        dropout_p=0.0,
        n_down=1,
        n_residual=1,
        n_up=1,
        kernel_width=3,
        backend_width=8,
        output_dim=SMALL_LAYOUT.dim,
        segment_frames=40,
        overlap_frames=8,
    )
    cfg.update(overrides)
    return ModelConfig(**cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def score():
    return parse_score(SCORE_JSON)


@pytest.fixture
def feature_cfg():
    return FeatureConfig()


@pytest.fixture
def small_layout():
    return SMALL_LAYOUT


@pytest.fixture
def tiny_model_cfg():
    return make_tiny_model_cfg()


@pytest.fixture(scope="session")
def small_corpus():
    return make_synthetic_corpus(3, 2, 160, SMALL_LAYOUT)


@pytest.fixture(scope="session")
def trained(small_corpus):
    """A few epochs of each model kind on the small corpus. Read-only."""
    return {
        kind: train(small_corpus, TrainConfig(epochs=3, seed=11, mode=kind), make_tiny_model_cfg())
        for kind in MODEL_KINDS
    }
