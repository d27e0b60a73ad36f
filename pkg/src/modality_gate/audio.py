"""Frozen audio backbone interface and the trainable audio bottleneck.

The backbone maps an audio feature sample to a class embedding plus
per-label sigmoid predictions over the audio label set; it is frozen, lives
outside the autodiff graph, and its outputs enter the model as constants.
The shipped implementation is synthetic: per-class prototype vectors with
cosine-similarity sigmoid scores. The bottleneck is the only trainable
audio-side component.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Linear, LayerNorm, Module


class AudioBackbone(ABC):
    """Deterministic frozen audio model: sample -> (embedding, predictions)."""

    labels: tuple[str, ...]
    embed_dim: int

    @property
    def audio_label_count(self) -> int:
        return len(self.labels)

    @abstractmethod
    def forward(self, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """[B, sample_dim] -> (embeddings [B, embed_dim], predictions [B, U_a]
        with every prediction in [0, 1])."""

    @abstractmethod
    def fingerprint(self) -> str:
        """Hash of all internal state; must be invariant under training."""


class SyntheticAudioBackbone(AudioBackbone):
    """Prototype-based stand-in for a pretrained audio transformer.

    A sample drawn as ``prototype[c] + noise`` scores highest on label c:
    predictions are ``sigmoid(gain * (cosine(sample, prototype) - margin))``.
    The embedding is a fixed random affine map of the sample through tanh.
    """

    def __init__(self, labels: tuple[str, ...], prototypes: np.ndarray,
                 embed_dim: int, seed: int, gain: float = 8.0, margin: float = 0.5):
        if prototypes.shape[0] != len(labels):
            raise ValueError("one prototype per label required")
        self.labels = tuple(labels)
        self.prototypes = np.asarray(prototypes, dtype=np.float64)
        self.embed_dim = embed_dim
        self.gain = gain
        self.margin = margin
        rng = np.random.default_rng(seed)
        sample_dim = self.prototypes.shape[1]
        self._w = rng.normal(0.0, 1.0 / np.sqrt(sample_dim), size=(sample_dim, embed_dim))
        self._b = rng.normal(0.0, 0.1, size=embed_dim)
        self._proto_unit = self.prototypes / np.maximum(
            np.linalg.norm(self.prototypes, axis=1, keepdims=True), 1e-12)

    @property
    def sample_dim(self) -> int:
        return self.prototypes.shape[1]

    def forward(self, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        samples = np.asarray(samples, dtype=np.float64)
        squeeze = samples.ndim == 1
        if squeeze:
            samples = samples[None]
        if samples.shape[1] != self.sample_dim:
            raise ad.ShapeError(f"audio sample width {samples.shape[1]} != {self.sample_dim}")
        unit = samples / np.maximum(np.linalg.norm(samples, axis=1, keepdims=True), 1e-12)
        cos = unit @ self._proto_unit.T
        predictions = 1.0 / (1.0 + np.exp(-self.gain * (cos - self.margin)))
        embeddings = np.tanh(samples @ self._w + self._b)
        if squeeze:
            return embeddings[0], predictions[0]
        return embeddings, predictions

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.prototypes, self._w, self._b):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.labels, self.embed_dim, self.gain, self.margin)).encode())
        return h.hexdigest()


def top_ya(predictions: np.ndarray, ya: int) -> list[int]:
    """Indices of the ya largest scores, descending; ties take the lower index."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.ndim != 1:
        raise ad.ShapeError("top_ya expects a 1-d prediction vector")
    if not (1 <= ya <= predictions.size):
        raise ValueError(f"ya={ya} out of range [1, {predictions.size}]")
    order = np.argsort(-predictions, kind="stable")
    return [int(i) for i in order[:ya]]


class AudioBottleneck(Module):
    """LayerNorm plus two ReLU-activated linear layers bridging the frozen
    audio embedding into the video model width."""

    def __init__(self, d_audio: int, d_visual: int, rng: np.random.Generator):
        self.ln = LayerNorm(d_audio)
        self.fc1 = Linear(d_audio, d_visual, rng)
        self.fc2 = Linear(d_visual, d_visual, rng)

    def __call__(self, embedding: Tensor) -> Tensor:
        return self.fc2(self.fc1(self.ln(embedding)).relu()).relu()
