"""Per-epoch training report with a canonical deterministic rendering.

``canonical_text`` round-trips floats through ``repr`` and excludes wall
clock, so two runs with identical config and seed render byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GateStats:
    drop_rate: float
    rev_hist: tuple[int, ...]   # 10 bins over [0, 1)
    auc: float


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    cls_loss: float
    rn_loss: float
    train_top1: float
    train_top5: float
    val_top1: float
    val_top5: float
    gate: GateStats

    def line(self) -> str:
        return (f"epoch={self.epoch} cls_loss={self.cls_loss!r} rn_loss={self.rn_loss!r} "
                f"train_top1={self.train_top1!r} train_top5={self.train_top5!r} "
                f"val_top1={self.val_top1!r} val_top5={self.val_top5!r} "
                f"drop_rate={self.gate.drop_rate!r} rn_auc={self.gate.auc!r}")


@dataclass
class TrainReport:
    epochs: list[EpochStats]
    wall_clock_s: float = 0.0

    @property
    def final(self) -> EpochStats:
        return self.epochs[-1]

    def canonical_text(self) -> str:
        lines = [e.line() for e in self.epochs]
        hist = ",".join(str(c) for c in self.final.gate.rev_hist)
        lines.append(f"final rev_hist=[{hist}]")
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        return self.canonical_text() + f"wall_clock_s={self.wall_clock_s:.2f}\n"
