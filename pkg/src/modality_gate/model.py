"""Full audio-visual recognizer: two visual streams, stream fusion, audio
bottleneck, relevance gate, fused classifier — plus checkpoint round-trip.

``fusion`` selects the comparator variant: ``gated`` runs the relevance
network and threshold, ``always`` fuses every sample with delta 1 (late
concat), ``never`` feeds a zeroed audio slot (visual only).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .audio import AudioBottleneck
from .autodiff import Tensor
from .gating import ClassifierHead, FusionHead, GateConfig, GateDecision, RelevanceNetwork, gate_batch
from .nn import Module, Parameter
from .video import ClipSpec, EncoderConfig, StreamEncoder, StreamFusion

FUSION_MODES = ("gated", "always", "never")


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int
    t: int = 4
    h: int = 32
    w: int = 32
    p: int = 8
    d: int = 64
    heads: int = 4
    blocks: int = 4
    num_st: int = 1
    mlp_ratio: float = 4.0
    d_audio: int = 32
    d_visual: int = 0          # 0 means "same as d"
    alpha: float = 0.25
    scheme: str = "mask"
    fusion: str = "gated"
    seed: int = 0

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion!r}")

    @property
    def visual_width(self) -> int:
        return self.d_visual or self.d

    def rgb_spec(self) -> ClipSpec:
        return ClipSpec(t=self.t, c=3, h=self.h, w=self.w, p=self.p, d=self.d)

    def flow_spec(self) -> ClipSpec:
        return ClipSpec(t=self.t, c=2, h=self.h, w=self.w, p=self.p, d=self.d)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(blocks=self.blocks, num_st=self.num_st,
                             heads=self.heads, mlp_ratio=self.mlp_ratio)

    def gate_config(self) -> GateConfig:
        return GateConfig(alpha=self.alpha, scheme=self.scheme)


@dataclass
class ForwardResult:
    logits: Tensor
    rev: Tensor | None
    delta: np.ndarray
    decisions: list[GateDecision] = field(default_factory=list)
    audio_emb: Tensor | None = None

    def probabilities(self) -> np.ndarray:
        return ad.softmax(self.logits.detach(), axis=-1).data


class ActionModel(Module):
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        enc = cfg.encoder_config()
        dv = cfg.visual_width
        self.rgb = StreamEncoder(cfg.rgb_spec(), enc, rng)
        self.flow = StreamEncoder(cfg.flow_spec(), enc, rng)
        self.streams = StreamFusion(cfg.d, dv, rng)
        self.bottleneck = AudioBottleneck(cfg.d_audio, dv, rng)
        self.relevance = RelevanceNetwork(dv, rng)
        self.fuser = FusionHead(dv, rng)
        self.classifier = ClassifierHead(dv, cfg.n_classes, rng)
        self.assign_names()

    def encode_visual(self, rgb: np.ndarray, flow: np.ndarray) -> Tensor:
        return self.streams(self.rgb(rgb), self.flow(flow))

    def forward(self, rgb: np.ndarray, flow: np.ndarray,
                audio_features: np.ndarray | None,
                fixed_delta: np.ndarray | None = None) -> ForwardResult:
        """``audio_features`` are frozen-backbone embeddings [B, d_audio];
        pass None only under the ``never`` fusion mode.

        ``fixed_delta`` bypasses the gate with a caller-supplied constant
        multiplier (gated mode only). The gradient check uses it to probe
        exactly the function the engine differentiates: the gate multiplier
        is a constant in the backward pass by design.
        """
        visual = self.encode_visual(rgb, flow)
        b, dv = visual.shape
        if self.cfg.fusion == "never":
            zeros = ad.Tensor(np.zeros((b, dv)))
            z_av = self.fuser(zeros, visual, np.zeros(b))
            return ForwardResult(self.classifier.logits(z_av), None, np.zeros(b))
        if audio_features is None:
            raise ValueError(f"fusion mode {self.cfg.fusion!r} requires audio features")
        audio_emb = self.bottleneck(ad.Tensor(audio_features))
        if self.cfg.fusion == "always":
            z_av = self.fuser(audio_emb, visual, np.ones(b))
            return ForwardResult(self.classifier.logits(z_av), None, np.ones(b),
                                 audio_emb=audio_emb)
        rev = self.relevance(audio_emb, visual)
        if fixed_delta is None:
            delta, decisions = gate_batch(rev.data, self.cfg.gate_config())
        else:
            delta, decisions = np.asarray(fixed_delta, dtype=np.float64), []
        z_av = self.fuser(audio_emb, visual, delta)
        return ForwardResult(self.classifier.logits(z_av), rev, delta, decisions, audio_emb)

    def trainable_parameters(self) -> list[Parameter]:
        """Parameters touched by the active fusion mode (others would never
        receive gradients)."""
        mods: list[Module] = [self.rgb, self.flow, self.streams, self.fuser, self.classifier]
        if self.cfg.fusion != "never":
            mods.append(self.bottleneck)
        if self.cfg.fusion == "gated":
            mods.append(self.relevance)
        return [p for m in mods for p in m.parameters() if not p.frozen]

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        arrays = {name: p.data for name, p in self.named_parameters()}
        meta = json.dumps({"model": asdict(self.cfg)}, sort_keys=True)
        np.savez(path, __meta__=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ActionModel":
        with np.load(path) as blob:
            meta = json.loads(bytes(blob["__meta__"].tobytes()).decode("utf-8"))
            model = cls(ModelConfig(**meta["model"]))
            for name, p in model.named_parameters():
                stored = blob[name]
                if stored.shape != p.data.shape:
                    raise ValueError(f"checkpoint shape mismatch for {name}")
                p.tensor.data = stored.astype(np.float64)
        return model
