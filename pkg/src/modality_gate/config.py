"""Run configuration and the flat key=value config file format.

Every key mirrors a ``RunConfig`` field; unknown keys are errors. The
``MODALITY_GATE_SEED`` environment variable overrides the seed after file
and CLI overrides are applied.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from .gating import GateConfig, LossConfig
from .nn import SgdConfig
from .savld import OverlapConfig
from .synth import SynthConfig
from .video import ENCODER_PRESETS

SEED_ENV_VAR = "MODALITY_GATE_SEED"


@dataclass(frozen=True)
class RunConfig:
    # model
    preset: str = "desk"
    blocks: int = 0           # 0 = take block counts from the preset
    num_st: int = 0
    d: int = 64
    heads: int = 4
    mlp_ratio: float = 4.0
    d_audio: int = 32
    d_visual: int = 0
    # gate / losses
    alpha: float = 0.25
    scheme: str = "mask"
    fusion: str = "gated"
    overlap: str = "iou"
    k: int = 3
    ya: int = 3
    lambda_rn: float = 1.0
    # optimizer / loop
    learning_rate: float = 0.005
    weight_decay: float = 1e-4
    epochs: int = 15
    batch_size: int = 64
    seed: int = 0
    augment: bool = False
    train_fraction: float = 0.8
    views: str = "1x1"
    train_eval_cap: int = 0   # 0 = evaluate on the full training split each epoch
    metric: str = "euclidean"
    # synthetic data
    u_v: int = 10
    u_a: int = 30
    samples_per_class: int = 200
    t: int = 4
    h: int = 32
    w: int = 32
    p: int = 8
    relevance_rate: float = 0.5
    visual_signal: float = 1.0
    visual_noise: float = 1.0
    visual_weak_rate: float = 0.0
    visual_weak_scale: float = 0.0
    audio_noise: float = 0.35
    emb_dim: int = 16
    emb_jitter: float = 0.15
    backbone_gain: float = 8.0
    backbone_margin: float = 0.5

    def __post_init__(self):
        if self.preset not in ENCODER_PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        parse_views(self.views)

    def sgd(self) -> SgdConfig:
        return SgdConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay)

    def gate(self) -> GateConfig:
        return GateConfig(alpha=self.alpha, scheme=self.scheme)

    def loss(self) -> LossConfig:
        return LossConfig(lambda_rn=self.lambda_rn)

    def overlap_config(self) -> OverlapConfig:
        return OverlapConfig(k=self.k, ya=self.ya, method=self.overlap)

    def encoder_blocks(self) -> tuple[int, int]:
        if self.blocks:
            return self.blocks, self.num_st or 1
        return ENCODER_PRESETS[self.preset]

    def synth(self) -> SynthConfig:
        return SynthConfig(
            u_v=self.u_v, u_a=self.u_a, samples_per_class=self.samples_per_class,
            t=self.t, h=self.h, w=self.w, p=self.p,
            relevance_rate=self.relevance_rate, visual_signal=self.visual_signal,
            visual_noise=self.visual_noise, visual_weak_rate=self.visual_weak_rate,
            visual_weak_scale=self.visual_weak_scale,
            audio_noise=self.audio_noise, emb_dim=self.emb_dim,
            emb_jitter=self.emb_jitter, d_audio=self.d_audio,
            backbone_gain=self.backbone_gain, backbone_margin=self.backbone_margin,
            seed=self.seed)


def parse_views(views: str) -> tuple[int, int]:
    """Parse an SxT view spec like ``3x4`` into (spatial, temporal) counts."""
    parts = views.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"views must look like 3x4, got {views!r}")
    s, t = int(parts[0]), int(parts[1])
    if s < 1 or t < 1:
        raise ValueError("view counts must be >= 1")
    return s, t


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"bad boolean for {key}: {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw.strip()


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional key=value file plus overrides.

    Precedence: defaults < file < overrides < MODALITY_GATE_SEED.
    """
    values: dict = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = value
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        values["seed"] = int(env_seed)
    return RunConfig(**values)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in dataclasses.fields(RunConfig)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
