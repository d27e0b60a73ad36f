"""Learnable irrelevant-modality dropout: relevance scoring, threshold gate,
masked fusion, and the classifier head.

The relevance network scores how class-relevant the audio embedding is to
the visual one; the gate turns that score into a per-sample multiplier delta
(hard-zeroed below the threshold under the mask scheme, always the raw score
under the weight scheme). Delta enters the fusion as a constant: the
threshold decision is not differentiated, and the relevance score itself is
trained only by its own binary cross-entropy term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Linear, LayerNorm, Mlp, Module

GATE_SCHEMES = ("mask", "weight")


@dataclass(frozen=True)
class GateConfig:
    alpha: float
    scheme: str = "mask"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.scheme not in GATE_SCHEMES:
            raise ValueError(f"unknown gate scheme {self.scheme!r}")


@dataclass(frozen=True)
class GateDecision:
    rev: float
    delta: float
    dropped: bool


def gate(rev: float, cfg: GateConfig) -> GateDecision:
    """Threshold the relevance score: mask zeroes it below alpha, weight
    passes it through unconditionally."""
    if not 0.0 < rev < 1.0:
        raise ValueError(f"relevance score must lie in (0, 1), got {rev}")
    if cfg.scheme == "mask" and rev < cfg.alpha:
        return GateDecision(rev=rev, delta=0.0, dropped=True)
    return GateDecision(rev=rev, delta=rev, dropped=False)


def gate_batch(rev_values: np.ndarray, cfg: GateConfig) -> tuple[np.ndarray, list[GateDecision]]:
    decisions = [gate(float(r), cfg) for r in np.asarray(rev_values).reshape(-1)]
    return np.array([d.delta for d in decisions]), decisions


@dataclass(frozen=True)
class LossConfig:
    lambda_rn: float = 1.0

    def __post_init__(self):
        if self.lambda_rn < 0:
            raise ValueError("lambda_rn must be >= 0")


class RelevanceNetwork(Module):
    """Residual MLP over the concatenated embeddings with a scalar sigmoid head.

    The head uses a wide init so initial scores spread across (0, 1) instead
    of collapsing to 0.5, which would stall the early BCE signal.
    """

    def __init__(self, d_visual: int, rng: np.random.Generator, hidden_ratio: float = 2.0,
                 head_std: float = 1.0):
        width = 2 * d_visual
        self.ln = LayerNorm(width)
        self.mlp = Mlp(width, rng, hidden=int(width * hidden_ratio))
        self.head = Linear(width, 1, rng, std=head_std * width ** -0.5)

    def __call__(self, audio_emb: Tensor, visual_emb: Tensor) -> Tensor:
        if audio_emb.shape != visual_emb.shape:
            raise ad.ShapeError(f"embedding widths differ: {audio_emb.shape} vs {visual_emb.shape}")
        z = ad.concat([audio_emb, visual_emb], axis=-1)
        h = self.mlp(self.ln(z)) + z
        return self.head(h).reshape(*audio_emb.shape[:-1]).sigmoid()


class FusionHead(Module):
    """Concatenate delta-scaled audio with visual and project back to model width."""

    def __init__(self, d_visual: int, rng: np.random.Generator, hidden_ratio: float = 1.0):
        width = 2 * d_visual
        self.ln = LayerNorm(width)
        self.mlp = Mlp(width, rng, hidden=int(width * hidden_ratio), out=d_visual)

    def __call__(self, audio_emb: Tensor, visual_emb: Tensor, delta: np.ndarray) -> Tensor:
        """``delta`` is a per-sample constant multiplier, shape [B] (or scalar
        for unbatched inputs); it carries no gradient."""
        if audio_emb.shape != visual_emb.shape:
            raise ad.ShapeError(f"embedding widths differ: {audio_emb.shape} vs {visual_emb.shape}")
        scale = np.asarray(delta, dtype=np.float64).reshape(audio_emb.shape[:-1] + (1,))
        z = ad.concat([audio_emb * ad.Tensor(scale), visual_emb], axis=-1)
        return self.mlp(self.ln(z))


class ClassifierHead(Module):
    """LayerNorm + MLP producing class logits; probabilities via softmax."""

    def __init__(self, d_visual: int, n_classes: int, rng: np.random.Generator, hidden_ratio: float = 2.0):
        self.ln = LayerNorm(d_visual)
        self.mlp = Mlp(d_visual, rng, hidden=int(d_visual * hidden_ratio), out=n_classes)

    def logits(self, z_av: Tensor) -> Tensor:
        return self.mlp(self.ln(z_av))

    def __call__(self, z_av: Tensor) -> Tensor:
        return self.logits(z_av).softmax(axis=-1)


def dual_loss(logits: Tensor, labels, rev: Tensor | None, targets, cfg: LossConfig) -> Tensor:
    """Mean classification cross-entropy plus ``lambda_rn`` times the mean
    relevance binary cross-entropy. ``rev=None`` (gate disabled) or
    ``lambda_rn=0`` yields the pure classification loss."""
    loss = ad.cross_entropy(logits, labels).mean()
    if rev is not None and cfg.lambda_rn > 0.0:
        loss = loss + ad.binary_cross_entropy(rev, targets).mean() * cfg.lambda_rn
    return loss
