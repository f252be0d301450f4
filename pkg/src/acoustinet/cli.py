"""Command-line entry points.

Verbs: train, eval, sweep-init, gradcheck, export-blueprint, make-manifest,
synth-data. Training writes metrics/confusion CSVs, a binary checkpoint,
and a summary.json under --out-dir.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import blueprint as bp
from . import checkpoint as ckpt
from . import presets as pz
from .audio import write_wav
from .data import default_tone_classes, make_manifest, synth_waveforms
from .gradcheck import preset_gradient_check
from .optim import TrainingDivergedError
from .training import (TrainConfig, build_split, evaluate, init_sweep, train,
                       write_confusion_csv, write_metrics_csv, write_sweep_csv)

logger = logging.getLogger(__name__)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="named preset (see `train --list-presets`)")
    p.add_argument("--config", help="TOML config file with [model] and [train] sections")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key, e.g. train.epochs=5")
    p.add_argument("--data", choices=["synthetic", "audiomnist-binary", "audiomnist-full"],
                   help="override the dataset named in the config")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--epochs", type=int, help="override the epoch count")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="CSV manifest (path,label,speaker_id)")
    p.add_argument("--audiomnist-dir", help="AudioMNIST data/ directory (manifest built automatically)")
    p.add_argument("--cache-dir", help="directory for preprocessed intensity caches")
    p.add_argument("--workers", type=int, default=1, help="concurrent record preparation")


def _resolve_config(args) -> TrainConfig:
    if args.preset and args.config:
        raise SystemExit("use either --preset or --config, not both")
    if args.preset:
        cfg = pz.get_preset(args.preset)
    elif args.config:
        cfg = pz.load_config_file(args.config)
    else:
        raise SystemExit("one of --preset or --config is required")
    if args.overrides:
        cfg = pz.apply_overrides(cfg, args.overrides)
    if getattr(args, "data", None):
        cfg = replace(cfg, dataset=args.data)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, epochs=args.epochs)
    return cfg


def _resolve_manifest(args, out_dir: Path):
    if args.manifest:
        return args.manifest
    if args.audiomnist_dir:
        manifest = out_dir / "manifest.csv"
        n = make_manifest(args.audiomnist_dir, manifest)
        logger.info("indexed %d recordings into %s", n, manifest)
        return str(manifest)
    return None


def _cmd_train(args) -> int:
    if args.list_presets:
        for name in pz.list_presets():
            print(name)
        return 0
    cfg = _resolve_config(args)
    if args.paper_check:
        pz.validate_paper_faithful(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _resolve_manifest(args, out_dir)
    split = build_split(cfg, manifest=manifest, cache_dir=args.cache_dir, workers=args.workers)
    n_runs = args.runs if args.runs is not None else cfg.n_runs
    cfg_hash = pz.config_hash(cfg)

    summary = {"config": pz.config_to_dict(cfg), "config_hash": cfg_hash,
               "n_train": len(split.train), "n_test": len(split.test), "runs": []}
    results, diverged = [], []
    for i in range(max(n_runs, 1)):
        run_cfg = replace(cfg, seed=cfg.seed + i)
        suffix = "" if n_runs <= 1 else f"_seed{run_cfg.seed}"
        try:
            result = train(run_cfg, split)
        except TrainingDivergedError as exc:
            logger.error("seed %d diverged: %s", run_cfg.seed, exc)
            diverged.append(run_cfg.seed)
            summary["runs"].append({"seed": run_cfg.seed, "diverged": True, "error": str(exc)})
            continue
        results.append(result)
        write_metrics_csv(out_dir / f"metrics{suffix}.csv", result)
        write_confusion_csv(out_dir / f"confusion{suffix}.csv", result.confusion)
        ckpt.save_checkpoint(out_dir / f"checkpoint{suffix}.annc", result.model,
                             seed=run_cfg.seed, epochs_completed=cfg.epochs,
                             config_hash=cfg_hash)
        summary["runs"].append({
            "seed": run_cfg.seed, "diverged": False,
            "final_train_acc": result.final_train_accuracy,
            "final_test_acc": result.final_test_accuracy,
            "sparsity": result.sparsity, "wall_time_s": result.wall_time,
        })
        print(f"seed {run_cfg.seed}: train acc {result.final_train_accuracy:.4f}, "
              f"test acc {result.final_test_accuracy:.4f}")

    if results and n_runs > 1:
        finals = np.array([r.final_test_accuracy for r in results])
        summary["mean_test_acc"] = float(finals.mean())
        summary["std_test_acc"] = float(finals.std(ddof=1)) if len(finals) > 1 else 0.0
        print(f"mean test acc over {len(finals)} runs: "
              f"{summary['mean_test_acc']:.4f} +- {summary['std_test_acc']:.4f}")
    summary["diverged_seeds"] = diverged
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return 0 if results else 1


def _cmd_eval(args) -> int:
    model, meta = ckpt.load_checkpoint(args.checkpoint)
    if args.preset or args.config:
        cfg = _resolve_config(args)
        if meta.get("config_hash") and pz.config_hash(cfg) != meta["config_hash"]:
            logger.warning("config hash %s does not match checkpoint hash %s",
                           pz.config_hash(cfg)[:12], meta["config_hash"][:12])
    else:
        cfg = None

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rate = args.rate or (int(model.spec.sinc.sample_rate) if model.spec.sinc else None)
    if cfg is None:
        if rate is None:
            raise SystemExit("--rate is required for models without a sinc front end")
        base = pz.get_preset("synth-rnn-desk")
        cfg = replace(base, model=model.spec, target_rate=rate,
                      dataset=args.data or "synthetic")
    manifest = _resolve_manifest(args, out_dir)
    split = build_split(cfg, manifest=manifest, cache_dir=args.cache_dir, workers=args.workers)
    records = split.train if args.split == "train" else split.test
    ev = evaluate(model, records)
    print(f"accuracy on {args.split} split ({len(records)} records): {ev.accuracy:.4f}")
    write_confusion_csv(out_dir / "confusion_eval.csv", ev.confusion)
    return 0


def _cmd_sweep_init(args) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _resolve_manifest(args, out_dir)
    split = build_split(cfg, manifest=manifest, cache_dir=args.cache_dir, workers=args.workers)
    c_values = [float(v) for v in args.c_values.split(",")]
    points = init_sweep(cfg, split, c_values, n_runs=args.runs)
    write_sweep_csv(out_dir / "sweep.csv", points)
    for p in points:
        print(f"c={p.c:g}: {p.mean_accuracy:.4f} +- {p.std_accuracy:.4f}")
    return 0


def _cmd_gradcheck(args) -> int:
    names = ["rnn", "hsrnn", "sinc_hsrnn"] if args.preset == "all" else [args.preset]
    worst = 0.0
    for name in names:
        report = preset_gradient_check(name, duration=args.duration, seed=args.seed, eps=args.eps)
        status = "ok" if report.max_rel_err < args.tol else "FAIL"
        print(f"[{status}] {name}: {report}")
        worst = max(worst, report.max_rel_err)
    return 0 if worst < args.tol else 1


def _cmd_export_blueprint(args) -> int:
    result = bp.export_blueprint(args.checkpoint, args.out, force=args.force)
    print(f"wrote blueprint with {result['meta']['n_connections']} connections to {args.out}")
    return 0


def _cmd_make_manifest(args) -> int:
    n = make_manifest(args.audiomnist_dir, args.out)
    print(f"indexed {n} recordings into {args.out}")
    return 0


def _cmd_synth_data(args) -> int:
    out_dir = Path(args.out_dir)
    classes = ([float(f) for f in args.classes.split(",")] if args.classes
               else default_tone_classes(args.n_classes, args.rate))
    clips = synth_waveforms(args.n_per_class, classes, args.rate, seed=args.seed,
                            n_speakers=args.n_speakers)
    counter = {}
    for x, label, speaker in clips:
        d = out_dir / f"{speaker:02d}"
        d.mkdir(parents=True, exist_ok=True)
        idx = counter.get((label, speaker), 0)
        counter[(label, speaker)] = idx + 1
        write_wav(d / f"{label}_{speaker:02d}_{idx}.wav", x, args.rate)
    make_manifest(out_dir, out_dir / "manifest.csv")
    print(f"wrote {len(clips)} clips and manifest to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acoustinet",
        description="Train, evaluate, and export physically constrained acoustic neural networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model (or several seeds) and write artifacts")
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--out-dir", default="runs/train", help="artifact directory")
    p.add_argument("--runs", type=int, help="number of seeds (default: config n_runs)")
    p.add_argument("--paper-check", action="store_true",
                   help="refuse configs outside the published hyperparameter ranges")
    p.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--rate", type=int, help="sample rate for dataset construction")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out-dir", default="runs/eval")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sweep-init", help="accuracy across uniform-init upper bounds")
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--c-values", required=True, help="comma-separated init bounds, e.g. 0.01,0.05,0.2")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--out-dir", default="runs/sweep")
    p.set_defaults(fn=_cmd_sweep_init)

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--preset", choices=["rnn", "hsrnn", "sinc_hsrnn", "all"], default="all")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--duration", type=float, default=0.1, help="probe clip length in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("export-blueprint", help="emit the physical blueprint JSON for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true",
                   help="export an unconstrained model verbatim (flagged non-physical)")
    p.set_defaults(fn=_cmd_export_blueprint)

    p = sub.add_parser("make-manifest", help="index an AudioMNIST directory into a CSV manifest")
    p.add_argument("--audiomnist-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_make_manifest)

    p = sub.add_parser("synth-data", help="write synthetic tone WAVs plus manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", help="comma-separated tone frequencies in Hz")
    p.add_argument("--n-classes", type=int, default=2)
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--rate", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-speakers", type=int, default=10)
    p.set_defaults(fn=_cmd_synth_data)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (KeyError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
