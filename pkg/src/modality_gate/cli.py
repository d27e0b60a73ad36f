"""Command-line interface.

Subcommands: build-savld, gen-data, train, eval, gate-stats, grad-check,
ablate. Exit codes: 0 success, 1 usage error, 2 numeric failure (NaN/Inf),
3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import RunConfig, load_config, save_config
from .model import ActionModel
from .savld import (EmbeddingFormatError, SavldFormatError, build_savld,
                    dump_distance_csv, load_embeddings, parse_savld,
                    save_embeddings, serialize_savld)
from .synth import SynthWorld, gen_dataset, load_dataset, save_dataset
from .train import ablation_csv, evaluate, gate_stats, render_ablation, run_ablation, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


def _cmd_build_savld(args) -> int:
    video = load_embeddings(args.video_emb)
    audio = load_embeddings(args.audio_emb)
    savld = build_savld(video, audio, k=args.k, metric=args.metric)
    serialize_savld(savld, args.out)
    if args.distances_out:
        dump_distance_csv(video, audio, args.metric, args.distances_out)
    print(f"wrote {len(savld)} entries (k={savld.k}, metric={args.metric}) to {args.out}")
    return EXIT_OK


def _load_run(args) -> RunConfig:
    overrides = {}
    for key in ("alpha", "scheme", "overlap", "k", "ya", "lambda_rn", "seed", "fusion",
                "epochs", "batch_size", "views"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "augment", False):
        overrides["augment"] = True
    return load_config(args.config, overrides)


def _cmd_gen_data(args) -> int:
    run = _load_run(args)
    world = SynthWorld(run.synth())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(world.video_table, out / "video_embeddings.txt")
    save_embeddings(world.audio_table, out / "audio_embeddings.txt")
    (out / "audio_labels.txt").write_text("\n".join(world.audio_labels) + "\n", encoding="utf-8")
    savld = build_savld(world.video_table, world.audio_table, k=run.k, metric=run.metric)
    serialize_savld(savld, out / "savld.tsv")
    dataset = gen_dataset(run.synth(), savld, world)
    save_dataset(dataset, out / "data")
    save_config(run, out / "run.cfg")
    print(f"wrote embeddings, labels, dictionary, and {len(dataset)} samples under {out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    run = _load_run(args)
    savld = parse_savld(args.savld)
    world = SynthWorld(run.synth())
    dataset = gen_dataset(run.synth(), savld, world)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, report = train(run, dataset, savld, world.backbone, world, log=print)
    model.save(out / "model.npz")
    (out / "report.txt").write_text(report.summary_text(), encoding="utf-8")
    (out / "report_canonical.txt").write_text(report.canonical_text(), encoding="utf-8")
    save_config(run, out / "run.cfg")
    final = report.final
    print(f"done: val_top1={final.val_top1:.4f} val_top5={final.val_top5:.4f} "
          f"(model and report under {out})")
    return EXIT_OK


def _load_model_and_world(model_path: str) -> tuple[ActionModel, SynthWorld, RunConfig]:
    model = ActionModel.load(model_path)
    run_cfg_path = Path(model_path).parent / "run.cfg"
    if not run_cfg_path.exists():
        raise FileNotFoundError(f"expected run config next to the checkpoint: {run_cfg_path}")
    run = load_config(run_cfg_path)
    return model, SynthWorld(run.synth()), run


def _cmd_eval(args) -> int:
    model, world, run = _load_model_and_world(args.model)
    dataset = load_dataset(args.data)
    top1, top5 = evaluate(model, dataset, world.backbone, views=args.views, seed=run.seed)
    print(f"top1={top1!r} top5={top5!r} views={args.views} samples={len(dataset)}")
    return EXIT_OK


def _cmd_gate_stats(args) -> int:
    model, world, _ = _load_model_and_world(args.model)
    dataset = load_dataset(args.data)
    stats = gate_stats(model, dataset, world.backbone)
    hist = ",".join(str(c) for c in stats.rev_hist)
    print(f"drop_rate={stats.drop_rate!r} auc={stats.auc!r}")
    print(f"rev_hist=[{hist}]")
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    from .diagnostics import GRAD_CHECK_SUITES, run_grad_suite

    names = [args.module] if args.module else sorted(GRAD_CHECK_SUITES)
    ok = True
    for name in names:
        if name not in GRAD_CHECK_SUITES:
            print(f"unknown module {name!r}; choose from {sorted(GRAD_CHECK_SUITES)}",
                  file=sys.stderr)
            return EXIT_USAGE
        for report in run_grad_suite(name):
            print(report.line())
            ok = ok and report.ok
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_ablate(args) -> int:
    run = _load_run(args)
    world = SynthWorld(run.synth())
    savld = build_savld(world.video_table, world.audio_table, k=run.k, metric=run.metric)
    dataset = gen_dataset(run.synth(), savld, world)
    cells = run_ablation(run, savld, dataset, world.backbone, world,
                         alphas=tuple(args.alphas), schemes=tuple(args.schemes),
                         overlaps=tuple(args.overlaps),
                         k_ya=tuple(tuple(int(x) for x in pair.split("-")) for pair in args.k_ya))
    Path(args.out).write_text(ablation_csv(cells), encoding="utf-8")
    print(render_ablation(cells))
    print(f"wrote {len(cells)} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modality-gate",
        description="Audio-visual action recognition with learnable irrelevant-modality dropout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-savld", help="build the label dictionary from embedding files")
    p.add_argument("--video-emb", required=True)
    p.add_argument("--audio-emb", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--metric", choices=["euclidean", "manhattan", "cosine"], default="euclidean")
    p.add_argument("--out", required=True)
    p.add_argument("--distances-out", default=None, help="optional CSV of the full distance matrix")
    p.set_defaults(func=_cmd_build_savld)

    p = sub.add_parser("gen-data", help="generate a synthetic world: embeddings, dictionary, dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train on seeded synthetic data")
    p.add_argument("--config", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--scheme", choices=["mask", "weight"], default=None)
    p.add_argument("--fusion", choices=["gated", "always", "never"], default=None)
    p.add_argument("--overlap", choices=["iou", "dice"], default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--ya", type=int, default=None)
    p.add_argument("--lambda-rn", dest="lambda_rn", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--savld", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--views", default="1x1", help="SxT view counts, e.g. 3x4")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gate-stats", help="gate statistics of a checkpoint on a dataset directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_gate_stats)

    p = sub.add_parser("grad-check", help="finite-difference gradient checks")
    p.add_argument("--module", default=None)
    p.set_defaults(func=_cmd_grad_check)

    p = sub.add_parser("ablate", help="run the gate/overlap ablation grid")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--alphas", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    p.add_argument("--schemes", nargs="+", default=["mask", "weight"])
    p.add_argument("--overlaps", nargs="+", default=["iou", "dice"])
    p.add_argument("--k-ya", dest="k_ya", nargs="+", default=["10-10", "10-20", "20-10", "20-20"])
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ad.NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, OSError, EmbeddingFormatError, SavldFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ad.ShapeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
