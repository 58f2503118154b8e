"""
Corpus – aligned (score, reference acoustic features) pairs and their
on-disk directory format.

Directory layout:
  corpus.json          {"provenance": ..., "layout": {...}, "items": [{"name": ..., "frames": T}, ...]}
  <name>.score.json    score file
  <name>.feat          feature matrix: int64 T, int64 D, then T·D float64,
                       all little-endian, row-major

A corpus argument is either such a directory or "synthetic:seed,n,frames".
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusError, ScoreFormatError
from .model import AcousticLayout
from .score import Score, load_score

log = logging.getLogger("Corpus")

MANIFEST = "corpus.json"
_HEADER = struct.Struct("<qq")


@dataclass
class CorpusItem:
    name: str
    score: Score
    features: np.ndarray          # T × D, denormalized

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.score.n_frames:
            raise CorpusError(
                f"item '{self.name}': score has {self.score.n_frames} frames, "
                f"features have shape {self.features.shape}"
            )


@dataclass
class Corpus:
    items: list[CorpusItem]
    layout: AcousticLayout = field(default_factory=AcousticLayout)
    provenance: str = "imported"

    def __post_init__(self):
        for item in self.items:
            if item.features.shape[1] != self.layout.dim:
                raise CorpusError(
                    f"item '{item.name}': {item.features.shape[1]} feature dims, layout has {self.layout.dim}"
                )

    def __len__(self) -> int:
        return len(self.items)

    @property
    def total_frames(self) -> int:
        return sum(item.score.n_frames for item in self.items)


# ─── Feature matrix files ─────────────────────────────────────────────────────

def write_feature_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise CorpusError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    Path(path).write_bytes(_HEADER.pack(*matrix.shape) + matrix.tobytes())


def read_feature_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CorpusError(f"cannot read feature file {path}: {e}") from e
    if len(raw) < _HEADER.size:
        raise CorpusError(f"{path}: truncated header")
    T, D = _HEADER.unpack_from(raw)
    if T < 0 or D < 1:
        raise CorpusError(f"{path}: invalid header T={T}, D={D}")
    expected = _HEADER.size + 8 * T * D
    if len(raw) != expected:
        raise CorpusError(f"{path}: expected {expected} bytes for {T}×{D}, file has {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(T, D).astype(np.float64)


# ─── Directories ──────────────────────────────────────────────────────────────

def save_corpus(corpus: Corpus, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for item in corpus.items:
        (directory / f"{item.name}.score.json").write_text(item.score.to_json(), encoding="utf-8")
        write_feature_matrix(directory / f"{item.name}.feat", item.features)
        entries.append({"name": item.name, "frames": item.score.n_frames})
    manifest = {"provenance": corpus.provenance, "layout": corpus.layout.to_dict(), "items": entries}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    log.info(f"Saved corpus with {len(corpus)} item(s) to {directory}")
    return directory


def load_corpus(directory: str | Path) -> Corpus:
    directory = Path(directory)
    manifest_path = directory / MANIFEST
    if not manifest_path.is_file():
        raise CorpusError(f"{directory} is not a corpus directory (no {MANIFEST})")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CorpusError(f"cannot read {manifest_path}: {e}") from e

    layout = AcousticLayout.from_dict(manifest.get("layout", {}))
    items = []
    for entry in manifest.get("items", []):
        name = entry.get("name")
        if not name:
            raise CorpusError(f"{manifest_path}: item without a name")
        try:
            score = load_score(directory / f"{name}.score.json")
        except ScoreFormatError as e:
            raise CorpusError(f"item '{name}': {e}") from e
        items.append(CorpusItem(name, score, read_feature_matrix(directory / f"{name}.feat")))
    if not items:
        raise CorpusError(f"{directory}: corpus has no items")
    log.info(f"Loaded corpus {directory}: {len(items)} item(s)")
    return Corpus(items=items, layout=layout, provenance=manifest.get("provenance", "imported"))


def resolve_corpus(spec: str, layout: AcousticLayout | None = None) -> Corpus:
    """Directory path or "synthetic:seed,n,frames"."""
    if spec.startswith("synthetic:"):
        from .synthetic import make_synthetic_corpus

        try:
            seed, n, frames = (int(v) for v in spec.split(":", 1)[1].split(","))
        except ValueError as e:
            raise CorpusError(f"bad synthetic corpus spec '{spec}' (expected synthetic:seed,n,frames)") from e
        return make_synthetic_corpus(seed, n, frames, layout)
    return load_corpus(spec)
