"""Synthetic modality-specific dataset with a controllable audio-relevance rate.

The generator builds a coherent world: video classes get concept vectors;
audio label embeddings cluster around the concept of their video group, so a
label dictionary built from these tables recovers the groups; audio samples
are noisy copies of per-class prototypes so the synthetic backbone scores
the right labels highly. Visual clips are per-class low-rank patch patterns
plus noise, easy for a tiny transformer to separate; an optional fraction
of clips carries only a weak visual signal, so relevant audio decides them
while irrelevant audio actively misleads.

Each sample carries a hidden ``is_relevant`` flag describing whether its
audio was drawn from inside the video class's dictionary entry; the flag is
for evaluation only and never feeds a training loss.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .audio import SyntheticAudioBackbone
from .savld import EmbeddingTable, Savld, make_table
from .video import ClipSpec, patches_to_clip

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthConfig:
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
    d_audio: int = 32
    backbone_gain: float = 8.0
    backbone_margin: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.relevance_rate <= 1.0:
            raise ValueError("relevance_rate must lie in [0, 1]")
        if self.u_v < 2 or self.u_a < 2:
            raise ValueError("need at least 2 video and 2 audio classes")

    def rgb_clip_shape(self) -> tuple[int, int, int, int]:
        return (self.t, 3, self.h, self.w)

    def flow_clip_shape(self) -> tuple[int, int, int, int]:
        return (self.t, 2, self.h, self.w)


@dataclass
class MultimodalSample:
    rgb: np.ndarray          # [T, 3, H, W]
    flow: np.ndarray         # [T, 2, H, W]
    audio: np.ndarray        # [sample_dim]
    label: int
    is_relevant: bool        # hidden ground truth, evaluation only
    audio_class: int         # hidden ground truth, evaluation only

    def equals(self, other: "MultimodalSample") -> bool:
        return (self.label == other.label
                and self.is_relevant == other.is_relevant
                and self.audio_class == other.audio_class
                and np.array_equal(self.rgb, other.rgb)
                and np.array_equal(self.flow, other.flow)
                and np.array_equal(self.audio, other.audio))


def video_label(i: int) -> str:
    return f"v{i:02d}"


def audio_label(i: int) -> str:
    return f"a{i:02d}"


class SynthWorld:
    """Embedding tables, backbone, and visual prototypes for one seeded world."""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x77]))
        concepts = rng.normal(0.0, 1.0, size=(cfg.u_v, cfg.emb_dim))
        self.video_labels = tuple(video_label(i) for i in range(cfg.u_v))
        self.audio_labels = tuple(audio_label(i) for i in range(cfg.u_a))
        # audio class i belongs to the group of video class i mod u_v
        self.audio_group = np.arange(cfg.u_a) % cfg.u_v
        audio_vecs = concepts[self.audio_group] + cfg.emb_jitter * rng.normal(
            0.0, 1.0, size=(cfg.u_a, cfg.emb_dim))
        self.video_table = make_table(zip(self.video_labels, concepts), cfg.emb_dim)
        self.audio_table = make_table(zip(self.audio_labels, audio_vecs), cfg.emb_dim)
        self.backbone = SyntheticAudioBackbone(
            labels=self.audio_labels,
            prototypes=audio_vecs,
            embed_dim=cfg.d_audio,
            seed=cfg.seed + 1,
            gain=cfg.backbone_gain,
            margin=cfg.backbone_margin,
        )
        patch_rgb = cfg.p * cfg.p * 3
        patch_flow = cfg.p * cfg.p * 2
        self.rgb_protos = cfg.visual_signal * rng.normal(0.0, 1.0, size=(cfg.u_v, patch_rgb))
        self.flow_protos = cfg.visual_signal * rng.normal(0.0, 1.0, size=(cfg.u_v, patch_flow))


def _sample_clip(proto: np.ndarray, spec: ClipSpec, noise: float,
                 rng: np.random.Generator) -> np.ndarray:
    n = spec.n_patches
    patches = np.broadcast_to(proto, (1, spec.t, n, proto.size)).copy()
    patches += noise * rng.normal(0.0, 1.0, size=patches.shape)
    return patches_to_clip(patches, spec)[0]


def gen_dataset(cfg: SynthConfig, savld: Savld, world: SynthWorld | None = None) -> list[MultimodalSample]:
    """Generate ``u_v * samples_per_class`` samples, deterministic under seed.

    With probability ``relevance_rate`` a sample's audio class is drawn from
    inside its video class's dictionary entry, otherwise from outside it.
    """
    world = world if world is not None else SynthWorld(cfg)
    if cfg.u_a < savld.k:
        raise ValueError(f"u_a={cfg.u_a} smaller than dictionary k={savld.k}")
    audio_index = {label: i for i, label in enumerate(world.audio_labels)}
    inside: list[np.ndarray] = []
    outside: list[np.ndarray] = []
    for v in range(cfg.u_v):
        label = world.video_labels[v]
        if label not in savld.entries:
            raise ValueError(f"dictionary entry missing for video class {label!r}")
        entry = [audio_index[a] for a in savld.entries[label] if a in audio_index]
        if len(entry) != savld.k:
            raise ValueError(f"entry for {label!r} names labels outside the audio set")
        inside.append(np.array(sorted(entry)))
        outside.append(np.array(sorted(set(range(cfg.u_a)) - set(entry))))
        if cfg.relevance_rate < 1.0 and outside[-1].size == 0:
            raise ValueError(f"no audio class outside the entry of {label!r}")

    rgb_spec = ClipSpec(t=cfg.t, c=3, h=cfg.h, w=cfg.w, p=cfg.p, d=1)
    flow_spec = ClipSpec(t=cfg.t, c=2, h=cfg.h, w=cfg.w, p=cfg.p, d=1)
    root = np.random.SeedSequence([cfg.seed, 0xDA7A])
    streams = root.spawn(cfg.u_v * cfg.samples_per_class)
    samples: list[MultimodalSample] = []
    for idx, stream in enumerate(streams):
        v = idx % cfg.u_v
        rng = np.random.default_rng(stream)
        relevant = bool(rng.random() < cfg.relevance_rate)
        weak = bool(rng.random() < cfg.visual_weak_rate)
        scale = cfg.visual_weak_scale if weak else 1.0
        pool = inside[v] if relevant else outside[v]
        audio_class = int(pool[rng.integers(pool.size)])
        audio = world.backbone.prototypes[audio_class] + cfg.audio_noise * rng.normal(
            0.0, 1.0, size=world.backbone.sample_dim)
        samples.append(MultimodalSample(
            rgb=_sample_clip(scale * world.rgb_protos[v], rgb_spec, cfg.visual_noise, rng),
            flow=_sample_clip(scale * world.flow_protos[v], flow_spec, cfg.visual_noise, rng),
            audio=audio,
            label=v,
            is_relevant=relevant,
            audio_class=audio_class,
        ))
    return samples


def intra_class_pairing(dataset: list[MultimodalSample], seed: int) -> list[MultimodalSample]:
    """Permute audio samples uniformly within each video class.

    Visual clips and labels stay put; the hidden audio-side ground truth
    travels with the audio. Classes with a single sample are left unpermuted.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA06]))
    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(dataset):
        by_class.setdefault(s.label, []).append(i)
    out = list(dataset)
    for label in sorted(by_class):
        idxs = by_class[label]
        if len(idxs) < 2:
            logger.warning("class %d has a single sample; pairing skipped", label)
            continue
        perm = rng.permutation(len(idxs))
        for slot, src in zip(idxs, (idxs[j] for j in perm)):
            donor = dataset[src]
            keep = dataset[slot]
            out[slot] = MultimodalSample(
                rgb=keep.rgb, flow=keep.flow, label=keep.label,
                audio=donor.audio, is_relevant=donor.is_relevant,
                audio_class=donor.audio_class)
    return out


def split(dataset: list[MultimodalSample], train_fraction: float,
          seed: int) -> tuple[list[MultimodalSample], list[MultimodalSample]]:
    """Disjoint stratified split, deterministic under seed."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly inside (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B117]))
    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(dataset):
        by_class.setdefault(s.label, []).append(i)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for label in sorted(by_class):
        idxs = by_class[label]
        n_train = int(len(idxs) * train_fraction)
        if n_train == 0 or n_train == len(idxs):
            raise ValueError(f"split leaves class {label} empty on one side")
        perm = rng.permutation(len(idxs))
        train_idx.extend(idxs[j] for j in perm[:n_train])
        val_idx.extend(idxs[j] for j in perm[n_train:])
    return [dataset[i] for i in sorted(train_idx)], [dataset[i] for i in sorted(val_idx)]


# -- disk round-trip -----------------------------------------------------------


def save_dataset(dataset: list[MultimodalSample], directory: str | Path) -> None:
    """One .npz per sample plus a tab-separated manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(dataset):
        name = f"sample_{i:05d}.npz"
        np.savez(directory / name, rgb=s.rgb, flow=s.flow, audio=s.audio)
        lines.append(f"{i}\t{s.label}\t{int(s.is_relevant)}\t{s.audio_class}\t{name}")
    (directory / "manifest.tsv").write_text(
        "# index\tlabel\tis_relevant\taudio_class\tfile\n" + "\n".join(lines) + "\n",
        encoding="utf-8")


def load_dataset(directory: str | Path) -> list[MultimodalSample]:
    directory = Path(directory)
    samples: list[MultimodalSample] = []
    for line in (directory / "manifest.tsv").read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        _, label, relevant, audio_class, name = line.split("\t")
        with np.load(directory / name) as blob:
            samples.append(MultimodalSample(
                rgb=blob["rgb"], flow=blob["flow"], audio=blob["audio"],
                label=int(label), is_relevant=bool(int(relevant)),
                audio_class=int(audio_class)))
    return samples
