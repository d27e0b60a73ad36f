"""Training loop, evaluation with multi-view averaging, gate statistics, and
the ablation grid runner.

One training step runs: encode both visual streams -> stream fusion; frozen
backbone forward -> top-ya predictions -> dictionary overlap target;
bottleneck -> relevance score -> threshold gate -> masked fusion ->
classifier; combined loss -> backward -> SGD. The loop is deterministic
under (config, seed): reports render to canonical text that excludes wall
clock, so identical runs produce byte-identical reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .audio import AudioBackbone, top_ya
from .config import RunConfig, parse_views
from .gating import dual_loss
from .model import ActionModel, ModelConfig
from .nn import sgd_step
from .savld import OverlapConfig, Savld, relevance_target
from .synth import MultimodalSample, SynthWorld, intra_class_pairing
from .train_report import EpochStats, GateStats, TrainReport

__all__ = [
    "TrainReport", "EpochStats", "GateStats", "train", "evaluate",
    "gate_stats", "run_ablation", "rank_auc", "batch_targets",
]


def rank_auc(scores: np.ndarray, flags: np.ndarray) -> float:
    """Area under the ROC curve via average ranks (ties get half credit).

    Returns 0.5 when either class is absent.
    """
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    n_pos = int(flags.sum())
    n_neg = flags.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = ranks[flags].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def batch_targets(predictions: np.ndarray, labels: np.ndarray, savld: Savld,
                  video_labels: tuple[str, ...], audio_labels: tuple[str, ...],
                  cfg: OverlapConfig) -> np.ndarray:
    """Overlap targets for a batch of backbone predictions."""
    out = np.empty(len(labels), dtype=np.float64)
    for i, (pred_row, label) in enumerate(zip(predictions, labels)):
        predicted = [audio_labels[j] for j in top_ya(pred_row, cfg.ya)]
        relevant = savld.entries[video_labels[int(label)]]
        out[i] = relevance_target(predicted, relevant, cfg)
    return out


def _stack_batch(samples: list[MultimodalSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rgb = np.stack([s.rgb for s in samples])
    flow = np.stack([s.flow for s in samples])
    audio = np.stack([s.audio for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return rgb, flow, audio, labels


def _view_offsets(n_spatial: int, n_temporal: int, seed: int) -> list[tuple[int, int, int]]:
    """(dh, dw, dt) circular-shift offsets per view; view (0, 0) is identity."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x71EB5]))
    offsets = []
    for si in range(n_spatial):
        for ti in range(n_temporal):
            if si == 0 and ti == 0:
                offsets.append((0, 0, 0))
            else:
                offsets.append((int(rng.integers(0, 8)) if si else 0,
                                int(rng.integers(0, 8)) if si else 0,
                                int(rng.integers(1, 4)) if ti else 0))
    return offsets


def _apply_view(rgb: np.ndarray, flow: np.ndarray, offset: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    dh, dw, dt = offset
    if dh or dw:
        rgb = np.roll(rgb, (dh, dw), axis=(-2, -1))
        flow = np.roll(flow, (dh, dw), axis=(-2, -1))
    if dt:
        rgb = np.roll(rgb, dt, axis=1)
        flow = np.roll(flow, dt, axis=1)
    return rgb, flow


def _forward_probs(model: ActionModel, backbone: AudioBackbone | None,
                   samples: list[MultimodalSample], views: tuple[int, int],
                   seed: int, batch_size: int) -> np.ndarray:
    """Per-sample class probabilities averaged over seeded crop/clip views."""
    offsets = _view_offsets(*views, seed=seed)
    probs = np.zeros((len(samples), model.cfg.n_classes))
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        rgb, flow, audio, _ = _stack_batch(chunk)
        feats = backbone.forward(audio)[0] if model.cfg.fusion != "never" else None
        for offset in offsets:
            v_rgb, v_flow = _apply_view(rgb, flow, offset)
            result = model.forward(v_rgb, v_flow, feats)
            probs[start:start + len(chunk)] += result.probabilities()
    return probs / len(offsets)


def evaluate(model: ActionModel, dataset: list[MultimodalSample],
             backbone: AudioBackbone | None = None, views: str | tuple[int, int] = (1, 1),
             seed: int = 0, batch_size: int = 64) -> tuple[float, float]:
    """Top-1/top-5 accuracy with probabilities averaged over views."""
    if not dataset:
        raise ValueError("evaluate on an empty dataset")
    if isinstance(views, str):
        views = parse_views(views)
    probs = _forward_probs(model, backbone, dataset, views, seed, batch_size)
    labels = np.array([s.label for s in dataset])
    order = np.argsort(-probs, axis=1, kind="stable")
    top1 = float((order[:, 0] == labels).mean())
    top_k = min(5, model.cfg.n_classes)
    top5 = float((order[:, :top_k] == labels[:, None]).any(axis=1).mean())
    return top1, top5


def gate_stats(model: ActionModel, dataset: list[MultimodalSample],
               backbone: AudioBackbone, batch_size: int = 64) -> GateStats:
    """Drop rate, 10-bin relevance histogram, and AUC of the relevance score
    against the hidden is_relevant flag."""
    revs = []
    deltas = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        rgb, flow, audio, _ = _stack_batch(chunk)
        feats = backbone.forward(audio)[0]
        result = model.forward(rgb, flow, feats)
        if result.rev is None:
            raise ValueError("gate statistics require the gated fusion mode")
        revs.append(result.rev.data.copy())
        deltas.append(result.delta)
    rev = np.concatenate(revs)
    delta = np.concatenate(deltas)
    flags = np.array([s.is_relevant for s in dataset], dtype=bool)
    hist = np.histogram(rev, bins=10, range=(0.0, 1.0))[0]
    return GateStats(
        drop_rate=float((delta == 0.0).mean()),
        rev_hist=tuple(int(c) for c in hist),
        auc=rank_auc(rev, flags),
    )


def train(run: RunConfig, dataset: list[MultimodalSample], savld: Savld,
          backbone: AudioBackbone, world: SynthWorld | None = None,
          video_labels: tuple[str, ...] | None = None,
          log=None) -> tuple[ActionModel, TrainReport]:
    """Train a model on an already-generated dataset; returns the model and a
    per-epoch report. The dataset is split train/val inside, stratified."""
    from .synth import split as stratified_split

    started = time.perf_counter()
    if video_labels is None:
        video_labels = world.video_labels if world is not None else tuple(
            sorted(savld.entries.keys()))
    blocks, num_st = run.encoder_blocks()
    model = ActionModel(ModelConfig(
        n_classes=len(video_labels), t=run.t, h=run.h, w=run.w, p=run.p, d=run.d,
        heads=run.heads, blocks=blocks, num_st=num_st, mlp_ratio=run.mlp_ratio,
        d_audio=run.d_audio, d_visual=run.d_visual, alpha=run.alpha,
        scheme=run.scheme, fusion=run.fusion, seed=run.seed))
    params = model.trainable_parameters()
    sgd_cfg = run.sgd()
    loss_cfg = run.loss()
    overlap_cfg = run.overlap_config()
    gated = run.fusion == "gated"

    train_set, val_set = stratified_split(dataset, run.train_fraction, run.seed)
    order_rng = np.random.default_rng(np.random.SeedSequence([run.seed, 0x0D0E]))
    epochs: list[EpochStats] = []
    for epoch in range(1, run.epochs + 1):
        epoch_set = intra_class_pairing(train_set, run.seed + 1000 * epoch) if run.augment else train_set
        order = order_rng.permutation(len(epoch_set))
        cls_losses: list[float] = []
        rn_losses: list[float] = []
        for start in range(0, len(order), run.batch_size):
            chunk = [epoch_set[i] for i in order[start:start + run.batch_size]]
            rgb, flow, audio, labels = _stack_batch(chunk)
            if gated or run.fusion == "always":
                feats, preds = backbone.forward(audio)
            else:
                feats = None
            result = model.forward(rgb, flow, feats)
            if gated:
                targets = batch_targets(preds, labels, savld, video_labels,
                                        backbone.labels, overlap_cfg)
                loss = dual_loss(result.logits, labels, result.rev, targets, loss_cfg)
                rn_losses.append(ad.binary_cross_entropy(
                    result.rev.detach(), targets).mean().item())
            else:
                loss = dual_loss(result.logits, labels, None, None, loss_cfg)
                rn_losses.append(0.0)
            cls_losses.append(ad.cross_entropy(result.logits.detach(), labels).mean().item())
            loss.backward()
            sgd_step(params, sgd_cfg)

        eval_train = train_set if not run.train_eval_cap else train_set[:run.train_eval_cap]
        train_top1, train_top5 = evaluate(model, eval_train, backbone, (1, 1), run.seed)
        val_top1, val_top5 = evaluate(model, val_set, backbone, (1, 1), run.seed)
        stats = gate_stats(model, val_set, backbone) if gated else GateStats(0.0, (0,) * 10, 0.5)
        epochs.append(EpochStats(
            epoch=epoch,
            cls_loss=float(np.mean(cls_losses)),
            rn_loss=float(np.mean(rn_losses)),
            train_top1=train_top1, train_top5=train_top5,
            val_top1=val_top1, val_top5=val_top5,
            gate=stats))
        if log is not None:
            log(epochs[-1].line())

    report = TrainReport(epochs=epochs, wall_clock_s=time.perf_counter() - started)
    return model, report


@dataclass
class AblationCell:
    alpha: float
    scheme: str
    overlap: str
    k: int
    ya: int
    seed: int
    val_top1: float
    val_top5: float
    drop_rate: float
    auc: float

    CSV_HEADER = "alpha,scheme,overlap,k,ya,seed,val_top1,val_top5,drop_rate,auc"

    def csv_row(self) -> str:
        return (f"{self.alpha!r},{self.scheme},{self.overlap},{self.k},{self.ya},"
                f"{self.seed},{self.val_top1!r},{self.val_top5!r},{self.drop_rate!r},{self.auc!r}")


def run_ablation(base: RunConfig, savld: Savld, dataset: list[MultimodalSample],
                 backbone: AudioBackbone, world: SynthWorld,
                 alphas=(0.25, 0.5, 0.75), schemes=("mask", "weight"),
                 overlaps=("iou", "dice"), k_ya=((10, 10), (10, 20), (20, 10), (20, 20)),
                 log=None) -> list[AblationCell]:
    """One training run per grid cell, sharing the base config and data."""
    import dataclasses as dc

    cells: list[AblationCell] = []
    for overlap in overlaps:
        for k, ya in k_ya:
            for alpha in alphas:
                for scheme in schemes:
                    run = dc.replace(base, alpha=alpha, scheme=scheme,
                                     overlap=overlap, k=k, ya=ya, fusion="gated")
                    cell_savld = savld if savld.k == k else None
                    if cell_savld is None:
                        from .savld import build_savld
                        cell_savld = build_savld(world.video_table, world.audio_table,
                                                 k=k, metric=run.metric)
                    model, report = train(run, dataset, cell_savld, backbone, world)
                    last = report.epochs[-1]
                    cells.append(AblationCell(
                        alpha=alpha, scheme=scheme, overlap=overlap, k=k, ya=ya,
                        seed=run.seed, val_top1=last.val_top1, val_top5=last.val_top5,
                        drop_rate=last.gate.drop_rate, auc=last.gate.auc))
                    if log is not None:
                        log(render_ablation([cells[-1]], header=len(cells) == 1))
    return cells


def render_ablation(cells: list[AblationCell], header: bool = True) -> str:
    """Aligned text table for a list of ablation cells."""
    rows = []
    if header:
        rows.append(f"{'alpha':>6} {'scheme':>7} {'overlap':>7} {'k':>4} {'ya':>4} "
                    f"{'seed':>5} {'top1':>8} {'top5':>8} {'drop':>7} {'auc':>7}")
    for c in cells:
        rows.append(f"{c.alpha:>6.2f} {c.scheme:>7} {c.overlap:>7} {c.k:>4} {c.ya:>4} "
                    f"{c.seed:>5} {c.val_top1:>8.4f} {c.val_top5:>8.4f} "
                    f"{c.drop_rate:>7.4f} {c.auc:>7.4f}")
    return "\n".join(rows)


def ablation_csv(cells: list[AblationCell]) -> str:
    return "\n".join([AblationCell.CSV_HEADER] + [c.csv_row() for c in cells]) + "\n"
