"""Convolution-free two-stream video transformer.

Each stream tokenizes a clip into per-frame patches with positional and
class embeddings, runs a stack of spatial blocks followed by factorized
spatiotemporal blocks, and emits the class embedding. Spatial attention is
per frame with the shared class token joining every frame group (its per
frame outputs are averaged back into the single token); temporal attention
operates per spatial site and excludes the class token. Stream class
embeddings are fused by two ReLU-activated linear layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Linear, LayerNorm, Mlp, Module, MultiHeadSelfAttention, Parameter, trunc_normal

ENCODER_INIT_STD = 0.02

ENCODER_PRESETS = {
    "small": (8, 1),
    "base": (12, 2),
    "large": (24, 4),
    "desk": (4, 1),
}


@dataclass(frozen=True)
class ClipSpec:
    """Clip geometry: frames x channels x height x width, patch side, width."""

    t: int
    c: int
    h: int
    w: int
    p: int
    d: int

    def __post_init__(self):
        if self.t < 1 or self.d < 1:
            raise ValueError("t and d must be >= 1")
        if self.h % self.p or self.w % self.p:
            raise ValueError(f"spatial size {self.h}x{self.w} not divisible by patch {self.p}")

    @property
    def n_patches(self) -> int:
        return (self.h * self.w) // (self.p * self.p)

    @property
    def patch_dim(self) -> int:
        return self.p * self.p * self.c

    @property
    def seq_len(self) -> int:
        return self.t * self.n_patches + 1


@dataclass(frozen=True)
class EncoderConfig:
    blocks: int
    num_st: int
    heads: int
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if not (1 <= self.num_st <= self.blocks):
            raise ValueError(f"num_st={self.num_st} outside [1, {self.blocks}]")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")

    @classmethod
    def preset(cls, name: str, heads: int = 4, mlp_ratio: float = 4.0) -> "EncoderConfig":
        if name not in ENCODER_PRESETS:
            raise ValueError(f"unknown encoder preset {name!r} (choose from {sorted(ENCODER_PRESETS)})")
        blocks, num_st = ENCODER_PRESETS[name]
        return cls(blocks=blocks, num_st=num_st, heads=heads, mlp_ratio=mlp_ratio)


def extract_patches(clip: np.ndarray, p: int) -> np.ndarray:
    """[B,T,C,H,W] -> [B,T,N,p*p*C]; patches in row-major grid order,
    each flattened channel-major."""
    b, t, c, h, w = clip.shape
    gh, gw = h // p, w // p
    x = clip.reshape(b, t, c, gh, p, gw, p)
    x = x.transpose(0, 1, 3, 5, 2, 4, 6)
    return x.reshape(b, t, gh * gw, c * p * p)


def patches_to_clip(patches: np.ndarray, spec: ClipSpec) -> np.ndarray:
    """Inverse of :func:`extract_patches` for a full patch grid."""
    b, t, n, _ = patches.shape
    gh, gw = spec.h // spec.p, spec.w // spec.p
    x = patches.reshape(b, t, gh, gw, spec.c, spec.p, spec.p)
    x = x.transpose(0, 1, 4, 2, 5, 3, 6)
    return x.reshape(b, t, spec.c, spec.h, spec.w)


class PatchTokenizer(Module):
    """Patch projection plus positional table and learnable class token."""

    def __init__(self, spec: ClipSpec, rng: np.random.Generator):
        self.spec = spec
        self.proj = Linear(spec.patch_dim, spec.d, rng, bias=False, std=ENCODER_INIT_STD)
        self.cls = Parameter(trunc_normal(rng, spec.d))
        self.pos = Parameter(np.zeros((spec.seq_len, spec.d)))

    def __call__(self, clip: np.ndarray) -> tuple[Tensor, Tensor]:
        """Returns (tokens [B,T,N,D], cls [B,D]); slot 0 of the positional
        table belongs to the class token, slot 1 + j*N + i to patch (j, i)."""
        spec = self.spec
        if clip.ndim != 5 or clip.shape[1:] != (spec.t, spec.c, spec.h, spec.w):
            raise ad.ShapeError(
                f"clip shape {clip.shape} != (B, {spec.t}, {spec.c}, {spec.h}, {spec.w})")
        b = clip.shape[0]
        patches = ad.Tensor(extract_patches(np.asarray(clip, dtype=np.float64), spec.p))
        cls_pos, patch_pos = ad.split(self.pos.tensor, [1, spec.t * spec.n_patches], axis=0)
        tokens = self.proj(patches) + patch_pos.reshape(spec.t, spec.n_patches, spec.d)
        cls = ad.expand((self.cls.tensor + cls_pos.reshape(spec.d)).reshape(1, spec.d), (b, spec.d))
        return tokens, cls


def _frame_attention(attn: MultiHeadSelfAttention, ln: LayerNorm,
                     tokens: Tensor, cls: Tensor | None) -> tuple[Tensor, Tensor | None]:
    """Pre-norm attention within each frame; the class token joins every
    frame group and its per-frame outputs are averaged."""
    b, t, n, d = tokens.shape
    if cls is None:
        out = attn(ln(tokens))
        return tokens + out, None
    cls_rep = ad.expand(cls.reshape(b, 1, 1, d), (b, t, 1, d))
    seq = ad.concat([cls_rep, tokens], axis=2)
    out = attn(ln(seq))
    cls_out, tok_out = ad.split(out, [1, n], axis=2)
    new_tokens = tokens + tok_out
    new_cls = cls + cls_out.reshape(b, t, d).mean(axis=1)
    return new_tokens, new_cls


def _token_mlp(mlp: Mlp, ln: LayerNorm, tokens: Tensor, cls: Tensor | None) -> tuple[Tensor, Tensor | None]:
    tokens = tokens + mlp(ln(tokens))
    if cls is not None:
        cls = cls + mlp(ln(cls))
    return tokens, cls


class SpatialBlock(Module):
    """Residual per-frame attention followed by a residual MLP."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float, rng: np.random.Generator):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng, std=ENCODER_INIT_STD)
        self.ln2 = LayerNorm(dim)
        self.mlp = Mlp(dim, rng, hidden=int(dim * mlp_ratio), std=ENCODER_INIT_STD)

    def __call__(self, tokens: Tensor, cls: Tensor | None) -> tuple[Tensor, Tensor | None]:
        tokens, cls = _frame_attention(self.attn, self.ln1, tokens, cls)
        return _token_mlp(self.mlp, self.ln2, tokens, cls)

    def zero_output_projections(self) -> None:
        self.attn.out.zero_()
        self.mlp.fc2.zero_()


class SpatioTemporalBlock(Module):
    """Factorized block: per-site temporal attention with a trailing linear
    layer, then per-frame spatial attention, then the MLP. The class token
    skips the temporal stage."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float, rng: np.random.Generator):
        self.ln_t = LayerNorm(dim)
        self.attn_t = MultiHeadSelfAttention(dim, heads, rng, std=ENCODER_INIT_STD)
        self.lr = Linear(dim, dim, rng, std=ENCODER_INIT_STD)
        self.ln_s = LayerNorm(dim)
        self.attn_s = MultiHeadSelfAttention(dim, heads, rng, std=ENCODER_INIT_STD)
        self.ln_m = LayerNorm(dim)
        self.mlp = Mlp(dim, rng, hidden=int(dim * mlp_ratio), std=ENCODER_INIT_STD)

    def temporal_stage(self, tokens: Tensor) -> Tensor:
        """Attention across frames at each fixed spatial site, plus residual."""
        swapped = self.ln_t(tokens).transpose((0, 2, 1, 3))
        mixed = self.lr(self.attn_t(swapped)).transpose((0, 2, 1, 3))
        return tokens + mixed

    def __call__(self, tokens: Tensor, cls: Tensor | None) -> tuple[Tensor, Tensor | None]:
        tokens = self.temporal_stage(tokens)
        tokens, cls = _frame_attention(self.attn_s, self.ln_s, tokens, cls)
        return _token_mlp(self.mlp, self.ln_m, tokens, cls)

    def zero_output_projections(self) -> None:
        self.attn_t.out.zero_()
        self.lr.zero_()
        self.attn_s.out.zero_()
        self.mlp.fc2.zero_()


class StreamEncoder(Module):
    """Tokenizer, (L - num_st) spatial blocks, num_st spatiotemporal blocks,
    final LayerNorm; returns the class embedding."""

    def __init__(self, spec: ClipSpec, cfg: EncoderConfig, rng: np.random.Generator):
        self.spec = spec
        self.cfg = cfg
        self.tokenizer = PatchTokenizer(spec, rng)
        self.blocks: list[Module] = [
            SpatialBlock(spec.d, cfg.heads, cfg.mlp_ratio, rng)
            for _ in range(cfg.blocks - cfg.num_st)
        ] + [
            SpatioTemporalBlock(spec.d, cfg.heads, cfg.mlp_ratio, rng)
            for _ in range(cfg.num_st)
        ]
        self.ln_final = LayerNorm(spec.d)

    def __call__(self, clip: np.ndarray) -> Tensor:
        tokens, cls = self.tokenizer(clip)
        for block in self.blocks:
            tokens, cls = block(tokens, cls)
        return self.ln_final(cls)


class StreamFusion(Module):
    """Concatenate the two stream class embeddings and fuse with two
    ReLU-activated linear layers."""

    def __init__(self, dim: int, out_dim: int, rng: np.random.Generator):
        self.fc1 = Linear(2 * dim, out_dim, rng)
        self.fc2 = Linear(out_dim, out_dim, rng)

    def __call__(self, rgb_cls: Tensor, flow_cls: Tensor) -> Tensor:
        if rgb_cls.shape != flow_cls.shape:
            raise ad.ShapeError(f"stream widths differ: {rgb_cls.shape} vs {flow_cls.shape}")
        z = ad.concat([rgb_cls, flow_cls], axis=-1)
        return self.fc2(self.fc1(z).relu()).relu()
