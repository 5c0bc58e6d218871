"""Command-line entry point: ``psogsim <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .csvio import read_commented_csv
from .dataset import (NormStats, SplitSpec, load_dataset, load_splits, save_dataset, save_splits,
                      split_random, subset_training)
from .errors import ConfigError, LeakageError, TrainingDivergedError
from .experiments import (COHORT_KINDS, EXPERIMENTS, ExperimentConfig, ExperimentResult, Workbench,
                          cohort_params, dataset_hash, derive_seed, load_config, render_subject,
                          run_experiments, subject_datasets)
from .eye import load_session_dir, write_session
from .metrics import accuracy_map, accuracy_report
from .nn import load_checkpoint, save_checkpoint
from .shifts import Shift2D, write_shift_manifest
from .trainer import PretrainPool, TrainedModel, fine_tune, pretrain_loso, train_fs

log = logging.getLogger("psogsim")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    return cfg


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args):
    cfg = _config(args)
    out = _out(args, cfg)
    for i, params in enumerate(cohort_params(cfg)):
        images = list(render_subject(cfg, i, params))
        m = write_session(images, out / "sessions" / params.subject_id, dump_images=args.dump_images)
        print(f"{params.subject_id}: {len(images)} images -> {m}")


def cmd_simulate(args):
    cfg = _config(args)
    out = _out(args, cfg)
    kinds = COHORT_KINDS if args.kind == "all" else (args.kind,)
    if args.sessions:
        sources = [(Path(m).parent.name, load_session_dir(m)) for m in args.sessions]
    else:
        sources = [(p.subject_id, render_subject(cfg, i, p)) for i, p in enumerate(cohort_params(cfg))]
    for i, (name, images) in enumerate(sources):
        built = subject_datasets(cfg, i, images, kinds)
        for kind, d in built.items():
            folder = out / "datasets" / kind
            folder.mkdir(parents=True, exist_ok=True)
            save_dataset(d, folder / f"{name}.csv")
            write_shift_manifest([Shift2D(float(a), float(b), int(c), int(e))
                                  for (a, b), (c, e) in zip(d.shift_mm, d.shift_px)],
                                 folder / f"{name}_shifts.csv")
            print(f"{name} [{kind}]: {len(d)} records, counters {d.counters}")


def cmd_train(args):
    cfg = _config(args)
    out = _out(args, cfg)
    if args.subject not in cfg.subject_ids:
        raise ConfigError(f"unknown subject {args.subject}")
    seed = args.run_seed
    bench = Workbench(cfg, args.jobs)
    cohort = bench.cohort["base"]
    data = cohort[args.subject]
    sp = split_random(data, SplitSpec(tuple(cfg.splits.data_scale),
                                      derive_seed(cfg.master_seed, "split", "data-scale", seed, args.subject)))
    sp = subset_training(sp, args.fraction, derive_seed(cfg.master_seed, "subset", seed, args.subject))
    tc = cfg.train.make(derive_seed(cfg.master_seed, "train", "data-scale", seed, args.subject))
    prov = {"fraction": args.fraction, "run_seed": seed, "master_seed": cfg.master_seed}
    pool_ids = []
    if args.regimen == "FS":
        model = train_fs(data, sp, tc, provenance=prov)
    else:
        pool = PretrainPool(args.subject, [cohort[s] for s in cfg.subject_ids if s != args.subject])
        pool_ids = sorted(pool.subject_ids)
        pre = pretrain_loso(pool, cfg.pretrain.make(derive_seed(cfg.master_seed, "pretrain", "base", 0,
                                                                seed, args.subject)),
                            val_fraction=cfg.pretrain_val_fraction)
        model = fine_tune(pre, data, sp, tc, provenance=prov)
    stem = f"{args.subject}_{args.regimen}"
    ck = out / f"{stem}.bin"
    save_checkpoint(ck, model.params, model.norm.mean, model.norm.std, model.provenance)
    save_dataset(data, out / f"{args.subject}.csv")
    save_splits(sp, out / f"{stem}_splits.json")
    manifest = {"version": __version__, "config": cfg.to_dict(), "config_hash": cfg.hash(),
                "provenance": model.provenance, "train_seed": tc.seed, "pool_subjects": pool_ids,
                "dataset_hashes": {args.subject: dataset_hash(data)},
                "history": dataclasses.asdict(model.history)}
    (out / f"{stem}_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{stem}: best epoch {model.history.best_epoch}, val {model.val_accuracy:.3f} deg, "
          f"test {model.evaluate(data, sp.test):.3f} deg -> {ck}")


def cmd_evaluate(args):
    params, mean, std, meta = load_checkpoint(args.checkpoint)
    data = load_dataset(args.dataset)
    idx = np.arange(len(data))
    if args.splits:
        idx = load_splits(args.splits).parts()[args.part]
    if mean is None:
        mean, std = np.zeros(data.X[0].size), np.ones(data.X[0].size)
    model = TrainedModel(params, NormStats(mean, std), None, meta)
    pred = model.predict(data.X[idx])
    rep = accuracy_report(pred, data.gaze[idx], data.shift_mm[idx], data.subjects[idx], data.bin_norm)
    print(f"records: {len(idx)}")
    print(f"spatial accuracy: {rep.overall:.4f} deg")
    for b, v in rep.per_bin.items():
        print(f"  {b.name}: {v:.4f} deg (n={rep.bin_counts[b]}, delta {rep.degradation.get(b, float('nan')):+.4f})")
    amap = accuracy_map(pred, data.gaze[idx])
    print(amap.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "accuracy_map.csv").write_text(amap.to_csv())


def cmd_sweep(args):
    cfg = _config(args)
    out = _out(args, cfg)
    results = run_experiments(cfg, args.experiment, out, jobs=args.jobs)
    for name, r in results.items():
        print(f"== {name}")
        _print_summary(r.summary)
    print(f"outputs in {out}")


def _print_summary(summary):
    for row in summary:
        print("  " + "  ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))


def _read_table(path: Path) -> list[dict]:
    _, rows = read_commented_csv(path)
    out = []
    for r in rows:
        d = {}
        for k, v in r.items():
            try:
                d[k] = int(v)
            except ValueError:
                try:
                    d[k] = float(v)
                except ValueError:
                    d[k] = v
        out.append(d)
    return out


def cmd_report(args):
    from .plots import plot_results
    out = Path(args.out)
    names = {"data-scale": "data_scale", "shift-bins": "shift_bins", "extended-range": "extended_range",
             "epoch-curves": "epoch_curves"}
    results = {}
    for name, stem in names.items():
        summ, rows = out / f"{stem}_summary.csv", out / f"{stem}.csv"
        if summ.exists() and rows.exists():
            results[name] = ExperimentResult(name, _read_table(rows), _read_table(summ))
            print(f"== {name}")
            _print_summary(results[name].summary)
    if not results:
        raise ConfigError(f"no experiment tables found in {out}")
    if "data-scale" in results and "extended-range" in results:
        from .metrics import relative_change
        ds = {(r["regimen"], r["fraction"]): r["mean_deg"] for r in results["data-scale"].summary}
        for r in results["extended-range"].summary:
            base = ds.get((r["regimen"], 0.4))
            if base:
                print(f"  {r['regimen']}: extended range vs 1 mm at 24% train: "
                      f"{relative_change(base, r['mean_deg']):+.1f}%")
    for f in plot_results(results, out):
        print(f"wrote {f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psogsim", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=True):
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--out", help="output directory (default: config out_dir)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    g = sub.add_parser("generate", help="render the synthetic cohort's eye-image sessions")
    common(g, jobs=False)
    g.add_argument("--dump-images", action="store_true", help="also write every frame as 16-bit PGM")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="simulate sensor frames and write per-subject datasets")
    common(s, jobs=False)
    s.add_argument("--kind", choices=(*COHORT_KINDS, "all"), default="base")
    s.add_argument("--sessions", nargs="+", help="session manifest(s) to ingest instead of rendering")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train one subject-specific model")
    common(t)
    t.add_argument("--subject", default="S00")
    t.add_argument("--regimen", choices=("FS", "FT"), default="FS")
    t.add_argument("--fraction", type=float, default=1.0)
    t.add_argument("--run-seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset CSV")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--splits")
    e.add_argument("--part", default="test")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", help="run experiments end to end")
    common(w)
    w.add_argument("--experiment", choices=(*EXPERIMENTS, "all"), default="all")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summaries and plots from an output directory")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, LeakageError, TrainingDivergedError, FileNotFoundError) as e:
        print(f"psogsim: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
