"""Semantic audio-video label dictionary (SAVLD).

Maps each video label to its k nearest audio labels in a shared text-embedding
space, persists the mapping as a tab-separated text file, and turns
multi-label audio predictions into normalized set-overlap relevance targets.
Embeddings are ingested from files, never computed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METRICS = ("euclidean", "manhattan", "cosine")
OVERLAP_METHODS = ("iou", "dice")


class EmbeddingFormatError(ValueError):
    """Malformed embedding file."""


class SavldFormatError(ValueError):
    """Malformed dictionary file."""


@dataclass(frozen=True)
class EmbeddingTable:
    """Ordered label -> vector table; labels are lowercased and unique."""

    dim: int
    labels: tuple[str, ...]
    vectors: np.ndarray  # [n, dim] float64

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.vectors.shape != (len(self.labels), self.dim):
            raise ValueError(f"vectors shape {self.vectors.shape} != ({len(self.labels)}, {self.dim})")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")
        if not np.isfinite(self.vectors).all():
            raise ValueError("non-finite embedding values")

    def __len__(self) -> int:
        return len(self.labels)

    def vector(self, label: str) -> np.ndarray:
        return self.vectors[self.labels.index(label)]


def make_table(pairs: Iterable[tuple[str, Sequence[float]]], dim: int) -> EmbeddingTable:
    """Build a table from (label, vector) pairs, lowercasing labels."""
    labels: list[str] = []
    rows: list[np.ndarray] = []
    for label, vec in pairs:
        lowered = label.lower()
        if lowered in labels:
            raise EmbeddingFormatError(f"duplicate label after lowercasing: {lowered!r}")
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (dim,):
            raise EmbeddingFormatError(f"label {lowered!r}: expected {dim} values, got {vec.shape}")
        labels.append(lowered)
        rows.append(vec)
    vectors = np.stack(rows) if rows else np.zeros((0, dim))
    return EmbeddingTable(dim=dim, labels=tuple(labels), vectors=vectors)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Parse the embedding text format.

    Line 1 is ``dim=<D>``; each further line is ``label<TAB>v1,v2,...,vD``
    with decimal floats. Lines starting with ``#`` are ignored.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    content = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not content or not content[0].startswith("dim="):
        raise EmbeddingFormatError(f"{path}: first line must be dim=<D>")
    try:
        dim = int(content[0][4:])
    except ValueError as exc:
        raise EmbeddingFormatError(f"{path}: bad dim line {content[0]!r}") from exc

    def parse_row(line: str) -> tuple[str, list[float]]:
        if "\t" not in line:
            raise EmbeddingFormatError(f"{path}: missing tab in {line!r}")
        label, values = line.split("\t", 1)
        try:
            vec = [float(tok) for tok in values.split(",")]
        except ValueError as exc:
            raise EmbeddingFormatError(f"{path}: non-numeric token in row {label!r}") from exc
        return label, vec

    return make_table((parse_row(ln) for ln in content[1:]), dim)


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={table.dim}\n")
        for label, vec in zip(table.labels, table.vectors):
            fh.write(label + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")


@dataclass(eq=False)
class Savld:
    """Per video label, its k nearest audio labels (nearest first).

    ``metric`` records how the dictionary was built; the text format does not
    persist it, so equality compares only ``k`` and the entries.
    """

    k: int
    entries: dict[str, tuple[str, ...]]
    metric: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        for video, audio in self.entries.items():
            if len(audio) != self.k:
                raise ValueError(f"entry {video!r} has {len(audio)} audio labels, expected {self.k}")
            if len(set(audio)) != len(audio):
                raise ValueError(f"entry {video!r} contains duplicate audio labels")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Savld):
            return NotImplemented
        return self.k == other.k and list(self.entries.items()) == list(other.entries.items())

    def __len__(self) -> int:
        return len(self.entries)


def distance_matrix(video: EmbeddingTable, audio: EmbeddingTable, metric: str) -> np.ndarray:
    """All-pairs [n_video, n_audio] distances in double precision."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if video.dim != audio.dim:
        raise ValueError(f"embedding dims differ: {video.dim} vs {audio.dim}")
    v = video.vectors[:, None, :]
    a = audio.vectors[None, :, :]
    if metric == "euclidean":
        return np.sqrt(((v - a) ** 2).sum(axis=-1))
    if metric == "manhattan":
        return np.abs(v - a).sum(axis=-1)
    # cosine distance 1 - cos; a zero-norm vector counts as similarity 0
    vn = np.linalg.norm(video.vectors, axis=1)
    an = np.linalg.norm(audio.vectors, axis=1)
    denom = vn[:, None] * an[None, :]
    dots = video.vectors @ audio.vectors.T
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return 1.0 - cos


def build_savld(video: EmbeddingTable, audio: EmbeddingTable, k: int, metric: str) -> Savld:
    """Pick the k nearest audio labels per video label, ascending by distance,
    ties broken by audio-table insertion order."""
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(audio):
        raise ValueError(f"k={k} exceeds audio label count {len(audio)}")
    dist = distance_matrix(video, audio, metric)
    entries: dict[str, tuple[str, ...]] = {}
    for row, video_label in enumerate(video.labels):
        order = np.argsort(dist[row], kind="stable")[:k]
        entries[video_label] = tuple(audio.labels[i] for i in order)
    return Savld(k=k, entries=entries, metric=metric)


def serialize_savld(savld: Savld, path: str | Path) -> None:
    """One line per video label: ``video<TAB>audio1;...;audiok``, no header."""
    with open(path, "w", encoding="utf-8") as fh:
        for video_label, audio_labels in savld.entries.items():
            fh.write(video_label + "\t" + ";".join(audio_labels) + "\n")


def parse_savld(path: str | Path) -> Savld:
    entries: dict[str, tuple[str, ...]] = {}
    k: int | None = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise SavldFormatError(f"{path}:{lineno}: missing tab")
        video_label, rest = line.split("\t", 1)
        audio_labels = tuple(rest.split(";"))
        if video_label in entries:
            raise SavldFormatError(f"{path}:{lineno}: duplicate video label {video_label!r}")
        if k is None:
            k = len(audio_labels)
        elif len(audio_labels) != k:
            raise SavldFormatError(
                f"{path}:{lineno}: row has {len(audio_labels)} audio labels, expected {k}")
        entries[video_label] = audio_labels
    if k is None:
        raise SavldFormatError(f"{path}: empty dictionary file")
    return Savld(k=k, entries=entries)


def dump_distance_csv(video: EmbeddingTable, audio: EmbeddingTable, metric: str, path: str | Path) -> None:
    """Full distance matrix as CSV, one video label per row."""
    dist = distance_matrix(video, audio, metric)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("video_label," + ",".join(audio.labels) + "\n")
        for label, row in zip(video.labels, dist):
            fh.write(label + "," + ",".join(repr(float(d)) for d in row) + "\n")


@dataclass(frozen=True)
class OverlapConfig:
    """Overlap target settings: dictionary size k, top prediction count ya."""

    k: int
    ya: int
    method: str = "iou"

    def __post_init__(self):
        if self.k < 1 or self.ya < 1:
            raise ValueError("k and ya must be >= 1")
        if self.method not in OVERLAP_METHODS:
            raise ValueError(f"unknown overlap method {self.method!r}")


def relevance_target(predicted: Sequence[str], relevant: Sequence[str], cfg: OverlapConfig) -> float:
    """Normalized set overlap between predicted and relevant audio labels.

    The raw IOU (or Dice) score is divided by the score at the maximal
    achievable intersection min(k, ya), so the result spans [0, 1]: 0 iff the
    sets are disjoint, 1 iff the intersection is maximal.
    """
    pred = set(predicted)
    rel = set(relevant)
    if not pred or not rel:
        raise ValueError("relevance_target: empty label set")
    if len(pred) != cfg.ya or len(predicted) != cfg.ya:
        raise ValueError(f"expected {cfg.ya} distinct predicted labels, got {len(pred)}")
    if len(rel) != cfg.k or len(relevant) != cfg.k:
        raise ValueError(f"expected {cfg.k} distinct relevant labels, got {len(rel)}")
    inter = len(pred & rel)
    lo, hi = min(cfg.k, cfg.ya), max(cfg.k, cfg.ya)
    if cfg.method == "iou":
        raw = inter / (cfg.k + cfg.ya - inter)
        raw_max = lo / hi
    else:
        raw = 2.0 * inter / (cfg.k + cfg.ya)
        raw_max = 2.0 * lo / (cfg.k + cfg.ya)
    return raw / raw_max
