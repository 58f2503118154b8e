"""
Model checkpoints – everything synthesis needs, in one self-checking file.

File layout:
  b"CSVS"            magic
  version            1 byte
  payload length     8 bytes, little-endian
  payload            named sections (see core/codec.py), canonical order:
                       meta, norm.*, cov.variances, [target.*], param.* (sorted)
  SHA-256            32 bytes over everything before it

Load errors carry CheckpointError.reason: "truncation", "version" or "corrupt".
"""

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import build_payload, decode_payload
from .errors import CheckpointError, ShapeError
from .model import AcousticLayout, AcousticModel, ModelConfig, build_model
from .score import FeatureConfig, NormStats
from .trajectory import TiedCovariance

log = logging.getLogger("Checkpoint")

MAGIC = b"CSVS"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sBQ")
DIGEST_SIZE = 32


@dataclass
class ModelCheckpoint:
    kind: str                                   # "proposed" | "baseline"
    model_cfg: ModelConfig
    feature_cfg: FeatureConfig
    layout: AcousticLayout
    stats: NormStats
    params: dict[str, np.ndarray]
    covariance: TiedCovariance
    target_min: np.ndarray | None = None        # baseline: raw o-space range
    target_max: np.ndarray | None = None
    rng_state: dict = field(default_factory=dict)
    history: list[float] = field(default_factory=list)
    version: int = FORMAT_VERSION

    def build_model(self) -> AcousticModel:
        model = build_model(self.kind, self.model_cfg)
        model.params.load_state_dict(self.params)
        return model

    @property
    def epochs(self) -> int:
        return len(self.history)


# ─── Save ─────────────────────────────────────────────────────────────────────

def _sections(ckpt: ModelCheckpoint) -> list[tuple[str, object]]:
    meta = {
        "kind": ckpt.kind,
        "model": ckpt.model_cfg.to_dict(),
        "feature": ckpt.feature_cfg.to_dict(),
        "layout": ckpt.layout.to_dict(),
        "pitch_min": ckpt.stats.pitch_min,
        "pitch_max": ckpt.stats.pitch_max,
        "variance_floor": ckpt.covariance.floor,
        "rng_state": ckpt.rng_state,
        "history": list(ckpt.history),
    }
    sections: list[tuple[str, object]] = [
        ("meta", meta),
        ("norm.in_min", ckpt.stats.in_min),
        ("norm.in_max", ckpt.stats.in_max),
        ("norm.out_min", ckpt.stats.out_min),
        ("norm.out_max", ckpt.stats.out_max),
        ("cov.variances", ckpt.covariance.variances),
    ]
    if ckpt.target_min is not None and ckpt.target_max is not None:
        sections += [("target.min", ckpt.target_min), ("target.max", ckpt.target_max)]
    sections += [(f"param.{name}", ckpt.params[name]) for name in sorted(ckpt.params)]
    return sections


def encode_checkpoint(ckpt: ModelCheckpoint) -> bytes:
    payload = build_payload(_sections(ckpt))
    head = _PREFIX.pack(MAGIC, ckpt.version, len(payload)) + payload
    return head + hashlib.sha256(head).digest()


def save_checkpoint(ckpt: ModelCheckpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(ckpt)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    log.info(f"Saved {ckpt.kind} checkpoint to {path} ({len(data)} bytes, {len(ckpt.params)} tensors)")
    return path


# ─── Load ─────────────────────────────────────────────────────────────────────

def decode_checkpoint(data: bytes) -> ModelCheckpoint:
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"file is {len(data)} bytes, shorter than the header", reason="truncation")
    magic, version, length = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, not a checkpoint file", reason="corrupt")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version}, this build reads version {FORMAT_VERSION}",
            reason="version",
        )
    end = _PREFIX.size + length
    if len(data) < end + DIGEST_SIZE:
        raise CheckpointError(
            f"file has {len(data)} bytes, header promises {end + DIGEST_SIZE}", reason="truncation"
        )
    if len(data) > end + DIGEST_SIZE:
        raise CheckpointError(f"{len(data) - end - DIGEST_SIZE} trailing byte(s) after digest", reason="corrupt")
    if hashlib.sha256(data[:end]).digest() != data[end:]:
        raise CheckpointError("SHA-256 digest mismatch", reason="corrupt")

    sections = decode_payload(data[_PREFIX.size:end])
    try:
        meta = sections["meta"]
        stats = NormStats(
            in_min=sections["norm.in_min"], in_max=sections["norm.in_max"],
            out_min=sections["norm.out_min"], out_max=sections["norm.out_max"],
            pitch_min=meta["pitch_min"], pitch_max=meta["pitch_max"],
        )
        params = {name[len("param."):]: value for name, value in sections.items() if name.startswith("param.")}
        ckpt = ModelCheckpoint(
            kind=meta["kind"],
            model_cfg=ModelConfig.from_dict(meta["model"]),
            feature_cfg=FeatureConfig.from_dict(meta["feature"]),
            layout=AcousticLayout.from_dict(meta["layout"]),
            stats=stats,
            params=params,
            covariance=TiedCovariance(sections["cov.variances"], meta["variance_floor"]),
            target_min=sections.get("target.min"),
            target_max=sections.get("target.max"),
            rng_state=meta.get("rng_state", {}),
            history=list(meta.get("history", [])),
            version=version,
        )
    except KeyError as e:
        raise CheckpointError(f"missing checkpoint section or field {e}") from e
    try:
        ckpt.build_model()
    except ShapeError as e:
        raise CheckpointError(f"parameters do not match the stored model config: {e}") from e
    return ckpt


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}", reason="corrupt") from e
    ckpt = decode_checkpoint(data)
    log.info(f"Loaded {ckpt.kind} checkpoint {path} ({ckpt.epochs} epoch(s) trained)")
    return ckpt
