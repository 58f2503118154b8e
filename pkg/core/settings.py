"""
Run configuration file.

UTF-8 JSON with optional top-level objects:
  {"feature": {...}, "model": {...}, "train": {...}, "synthesis": {...}}
Each object mirrors the matching dataclass; missing keys keep their defaults,
unknown keys are logged and ignored. Environment defaults (seed, sample rate,
warping factor) apply where the file is silent.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .score import FeatureConfig
from .trainer import TrainConfig
from .vocoder import SynthesisConfig

log = logging.getLogger("Settings")

SECTIONS = ("feature", "model", "train", "synthesis")


@dataclass
class RunConfig:
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "synthesis": self.synthesis.to_dict(),
        }


def run_config_from_dict(raw: dict, env_defaults: dict | None = None) -> RunConfig:
    """
    env_defaults may hold "seed", "sample_rate" and "alpha"; they fill the
    train/synthesis fields the file does not set.
    """
    if not isinstance(raw, dict):
        raise ConfigError("run configuration must be a JSON object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        log.warning(f"RunConfig: ignoring unknown sections {sorted(unknown)}")
    for name in SECTIONS:
        if not isinstance(raw.get(name, {}), dict):
            raise ConfigError(f"config section '{name}' must be an object")

    env = env_defaults or {}
    train_raw = dict(raw.get("train", {}))
    synth_raw = dict(raw.get("synthesis", {}))
    if env.get("seed") is not None:
        train_raw.setdefault("seed", env["seed"])
        synth_raw.setdefault("seed", env["seed"])
    if env.get("sample_rate") is not None:
        synth_raw.setdefault("sample_rate", env["sample_rate"])
    if env.get("alpha") is not None:
        synth_raw.setdefault("alpha", env["alpha"])

    try:
        cfg = RunConfig(
            feature=FeatureConfig.from_dict(raw.get("feature", {})),
            model=ModelConfig.from_dict(raw.get("model", {})),
            train=TrainConfig.from_dict(train_raw),
            synthesis=SynthesisConfig.from_dict(synth_raw),
        )
    except TypeError as e:
        raise ConfigError(f"invalid configuration value: {e}") from e
    return cfg


def load_run_config(path: str | Path | None, env_defaults: dict | None = None) -> RunConfig:
    if path is None:
        return run_config_from_dict({}, env_defaults)
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    cfg = run_config_from_dict(raw, env_defaults)
    log.debug(f"Loaded run config from {path}")
    return cfg
