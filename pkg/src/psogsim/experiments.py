"""End-to-end studies: data scale, out-of-range shift bins, extended shift range, epoch curves.

Every run is keyed by (seed, subject); seeds for splits, subsets, initialization and
pre-training are derived from the master seed and that key, so results do not depend
on execution order or worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (Dataset, SplitSpec, Splits, build_dataset, split_random, split_shift_binned,
                      subset_training)
from .errors import ConfigError, LeakageError
from .eye import EyeModelParams, ImageSpec, StimulusSpec, draw_subject, iter_session
from .metrics import accuracy_by_shift_bin, accuracy_map, average_maps, spatial_accuracy
from .nn import NetworkParams, TrainConfig
from .sensor import ArrayLayout, receptive_kernel
from .shifts import ShiftBin, ShiftDistribution
from .trainer import PretrainPool, fine_tune, pretrain_loso, train_fs

log = logging.getLogger(__name__)

EXPERIMENTS = ("data-scale", "shift-bins", "extended-range", "epoch-curves")


# -- configuration -------------------------------------------------------------

@dataclass
class CohortConfig:
    n_subjects: int = 12
    seed: int = 2024
    n_fixations: int = 25
    samples_per_fixation: tuple[int, int] = (2, 8)
    jitter_std_deg: float = 0.25
    shifts_per_image: int = 5
    head_walk_std_mm: float = 0.05
    head_walk_limit_mm: float = 1.0
    noise_std: float = 0.01
    scale_px_per_mm: float = 20.0
    window_side_px: int = 121
    pitch_px: int = 60


@dataclass
class ShiftConfig:
    sigma_mm: float = 1.0
    extended_sigma_mm: float = 2.5
    limit_mm: float = 5.0
    bin_norm: str = "euclidean"


@dataclass
class SplitConfig:
    data_scale: tuple[float, float, float] = (0.6, 0.1, 0.3)
    shift_bins: tuple[float, float, float] = (0.56, 0.14, 0.30)
    extended_range: tuple[float, float, float] = (0.24, 0.06, 0.70)


@dataclass
class TrainSection:
    learning_rate: float = 3e-3
    batch_size: int = 32
    max_epochs: int = 150
    patience: int | None = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def make(self, seed: int, **overrides) -> TrainConfig:
        return TrainConfig(seed=seed, **{**asdict(self), **overrides})


def _pretrain_default():
    return TrainSection(batch_size=128, max_epochs=20, patience=5)


@dataclass
class ExperimentConfig:
    cohort: CohortConfig = field(default_factory=CohortConfig)
    shifts: ShiftConfig = field(default_factory=ShiftConfig)
    splits: SplitConfig = field(default_factory=SplitConfig)
    train: TrainSection = field(default_factory=TrainSection)
    pretrain: TrainSection = field(default_factory=_pretrain_default)
    pretrain_val_fraction: float = 0.15
    regimens: tuple[str, ...] = ("FS", "FT")
    fractions: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    map_fraction: float = 0.4
    epoch_grid: tuple[int, ...] = (0, 1, 2, 5, 10, 25, 50, 100, 150, 200)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    target_subjects: tuple[str, ...] | None = None
    master_seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        bad = set(self.regimens) - {"FS", "FT"}
        if bad or not self.regimens:
            raise ConfigError(f"regimens must be drawn from FS/FT, got {self.regimens}")
        if not self.fractions or any(not 0 < f <= 1 for f in self.fractions):
            raise ConfigError("fractions must lie in (0, 1]")
        if any(e < 0 for e in self.epoch_grid) or list(self.epoch_grid) != sorted(set(self.epoch_grid)):
            raise ConfigError("epoch_grid must be increasing non-negative integers")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.cohort.n_subjects < 2:
            raise ConfigError("leave-one-subject-out needs at least two subjects")
        if self.target_subjects is not None:
            unknown = set(self.target_subjects) - set(self.subject_ids)
            if unknown:
                raise ConfigError(f"unknown target subjects {sorted(unknown)}")
        for name in ("data_scale", "shift_bins", "extended_range"):
            SplitSpec(tuple(getattr(self.splits, name)))

    @property
    def subject_ids(self) -> list[str]:
        return [f"S{i:02d}" for i in range(self.cohort.n_subjects)]

    @property
    def targets(self) -> list[str]:
        return list(self.target_subjects) if self.target_subjects is not None else self.subject_ids

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        """Digest of everything that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return _build(cls, d, "config")


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        hint = hints[k]
        if dataclasses.is_dataclass(hint):
            v = _build(hint, v, f"{where}.{k}")
        elif isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return ExperimentConfig.from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(cfg.to_json())


def derive_seed(master: int, *key) -> int:
    """Stable 32-bit seed for a tuple key of ints and strings."""
    words = []
    for k in key:
        if isinstance(k, str):
            words.append(int.from_bytes(hashlib.sha256(k.encode()).digest()[:4], "little"))
        else:
            words.append(int(k))
    return int(np.random.SeedSequence([master, *words]).generate_state(1)[0])


# -- cohort --------------------------------------------------------------------

COHORT_KINDS = ("base", "extended", "none")


def cohort_params(cfg: ExperimentConfig) -> list[EyeModelParams]:
    c = cfg.cohort
    rng = np.random.default_rng(derive_seed(c.seed, "anatomy"))
    base = EyeModelParams(noise_std=c.noise_std)
    return [draw_subject(rng, sid, base) for sid in cfg.subject_ids]


def _distributions(cfg: ExperimentConfig) -> dict[str, ShiftDistribution]:
    s = cfg.shifts
    return {"base": ShiftDistribution(sigma_mm=s.sigma_mm, limit_mm=s.limit_mm),
            "extended": ShiftDistribution(sigma_mm=s.extended_sigma_mm, limit_mm=s.limit_mm),
            "none": ShiftDistribution(kind="none", limit_mm=s.limit_mm)}


def stimulus(cfg: ExperimentConfig) -> StimulusSpec:
    c = cfg.cohort
    return StimulusSpec(n_fixations=c.n_fixations, samples_per_fixation=tuple(c.samples_per_fixation),
                        jitter_std_deg=c.jitter_std_deg)


def image_spec(cfg: ExperimentConfig) -> ImageSpec:
    return ImageSpec(scale_px_per_mm=cfg.cohort.scale_px_per_mm, max_shift_mm=cfg.shifts.limit_mm)


def render_subject(cfg: ExperimentConfig, index: int, params: EyeModelParams):
    c = cfg.cohort
    return iter_session(stimulus(cfg), params, c.head_walk_std_mm, derive_seed(c.seed, "session", index),
                        image_spec(cfg), c.head_walk_limit_mm)


def subject_datasets(cfg: ExperimentConfig, index: int, images, kinds=COHORT_KINDS) -> dict[str, Dataset]:
    """Simulate the sensor array over one subject's images for each shift regime."""
    c = cfg.cohort
    images = list(images)
    spec = image_spec(cfg)
    layout = ArrayLayout(window_side_px=c.window_side_px, pitch_px=c.pitch_px,
                         array_center_px=(spec.width // 2, spec.height // 2))
    kernel = receptive_kernel(c.window_side_px)
    dists = _distributions(cfg)
    return {kind: build_dataset(images, dists[kind], layout, kernel, derive_seed(c.seed, "shifts", kind, index),
                                c.shifts_per_image, bin_norm=cfg.shifts.bin_norm)
            for kind in kinds}


def _build_subject(cfg: ExperimentConfig, index: int, params: EyeModelParams) -> dict[str, Dataset]:
    return subject_datasets(cfg, index, render_subject(cfg, index, params))


def dataset_hash(d: Dataset) -> str:
    h = hashlib.sha256()
    for a in (d.X, d.gaze, d.shift_mm, d.shift_px):
        h.update(np.ascontiguousarray(a).tobytes())
    h.update("|".join(d.subjects.tolist()).encode())
    return h.hexdigest()[:16]


# -- per-run tasks (module level so worker processes can unpickle them) ---------

def _pretrain_task(cfg, kind, b1_only, seed, target, pool_data):
    pool = PretrainPool(target, pool_data)
    params = pretrain_loso(pool, cfg.pretrain.make(derive_seed(cfg.master_seed, "pretrain", kind,
                                                               int(b1_only), seed, target)),
                           val_fraction=cfg.pretrain_val_fraction)
    info = {"subjects": sorted(pool.subject_ids), "records": int(sum(len(d) for d in pool_data))}
    return params, info


def _train(regimen, cfg, data, splits, tc, pretrained, prov):
    if regimen == "FS":
        return train_fs(data, splits, tc, provenance=prov)
    return fine_tune(pretrained, data, splits, tc, provenance=prov)


def _data_scale_task(cfg, seed, subject, data, pretrained):
    sp = split_random(data, SplitSpec(tuple(cfg.splits.data_scale),
                                      derive_seed(cfg.master_seed, "split", "data-scale", seed, subject)))
    tc = cfg.train.make(derive_seed(cfg.master_seed, "train", "data-scale", seed, subject))
    rows, maps = [], {}
    for frac in cfg.fractions:
        sub = subset_training(sp, frac, derive_seed(cfg.master_seed, "subset", seed, subject))
        for reg in cfg.regimens:
            m = _train(reg, cfg, data, sub, tc, pretrained, {"fraction": frac})
            pred = m.predict(data.X[sp.test])
            rows.append({"regimen": reg, "fraction": frac, "seed": seed, "subject": subject,
                         "n_train": len(sub.train),
                         "test_accuracy_deg": spatial_accuracy(pred, data.gaze[sp.test]),
                         "val_accuracy_deg": m.val_accuracy, "best_epoch": m.history.best_epoch})
            if frac == cfg.map_fraction:
                maps[reg] = accuracy_map(pred, data.gaze[sp.test])
    return rows, maps


def _shift_bin_task(cfg, seed, subject, data, pretrained):
    sp = split_shift_binned(data, SplitSpec(tuple(cfg.splits.shift_bins),
                                            derive_seed(cfg.master_seed, "split", "shift-bins", seed, subject),
                                            mode="shift-binned"))
    tc = cfg.train.make(derive_seed(cfg.master_seed, "train", "shift-bins", seed, subject))
    rows = []
    for reg in cfg.regimens:
        m = _train(reg, cfg, data, sp, tc, pretrained, {})
        per_bin = {}
        for b, idx in sp.test_bins.items():
            if len(idx):
                per_bin.update(accuracy_by_shift_bin(m.predict(data.X[idx]), data.gaze[idx],
                                                     data.shift_mm[idx], cfg.shifts.bin_norm))
        for b in ShiftBin:
            if b in per_bin:
                rows.append({"regimen": reg, "seed": seed, "subject": subject, "bin": b.name,
                             "n_test": len(sp.test_bins[b]), "accuracy_deg": per_bin[b],
                             "degradation_deg": per_bin[b] - per_bin[ShiftBin.B1]})
    return rows


def _extended_task(cfg, seed, subject, data, pretrained):
    sp = split_random(data, SplitSpec(tuple(cfg.splits.extended_range),
                                      derive_seed(cfg.master_seed, "split", "extended-range", seed, subject)))
    tc = cfg.train.make(derive_seed(cfg.master_seed, "train", "extended-range", seed, subject))
    rows = []
    for reg in cfg.regimens:
        m = _train(reg, cfg, data, sp, tc, pretrained, {})
        rows.append({"regimen": reg, "seed": seed, "subject": subject,
                     "sigma_mm": cfg.shifts.extended_sigma_mm, "n_train": len(sp.train),
                     "test_accuracy_deg": m.evaluate(data, sp.test)})
    return rows


def _epoch_task(cfg, seed, subject, data, pretrained):
    sp = split_random(data, SplitSpec(tuple(cfg.splits.data_scale),
                                      derive_seed(cfg.master_seed, "split", "data-scale", seed, subject)))
    tc = cfg.train.make(derive_seed(cfg.master_seed, "train", "epoch-curves", seed, subject),
                        max_epochs=max(cfg.epoch_grid), patience=None)
    rows = []
    for reg in ("FS", "FT"):
        h = _train(reg, cfg, data, sp, tc, pretrained, {}).history
        curve = [h.initial_val_accuracy, *h.val_accuracy]
        for e in cfg.epoch_grid:
            rows.append({"regimen": reg, "seed": seed, "subject": subject, "epoch": e,
                         "val_accuracy_deg": curve[e]})
    return rows


def _robustness_task(cfg, seed, subject, shifted, unshifted):
    sp = split_random(shifted, SplitSpec(tuple(cfg.splits.data_scale),
                                         derive_seed(cfg.master_seed, "split", "data-scale", seed, subject)))
    tc = cfg.train.make(derive_seed(cfg.master_seed, "train", "robustness", seed, subject))
    rows = []
    for name, data in (("sigma", shifted), ("zero", unshifted)):
        m = train_fs(data, sp, tc)
        rows.append({"train_shift": name, "seed": seed, "subject": subject,
                     "test_accuracy_deg": m.evaluate(shifted, sp.test)})
    return rows


def _call(job):
    fn, args = job
    return fn(*args)


# -- orchestration -------------------------------------------------------------

class Workbench:
    """Shared state for one invocation: cohort datasets, pre-trained weights, worker pool."""

    def __init__(self, cfg: ExperimentConfig, jobs: int = 1):
        self.cfg = cfg
        self.jobs = max(1, int(jobs))
        self._cohort: dict[str, dict[str, Dataset]] | None = None
        self._pretrained: dict[tuple, NetworkParams] = {}
        self.pool_log: list[dict] = []

    def map(self, fn, arg_list) -> list:
        jobs = [(fn, a) for a in arg_list]
        if self.jobs == 1 or len(jobs) <= 1:
            return [_call(j) for j in jobs]
        with ProcessPoolExecutor(max_workers=self.jobs) as ex:
            return list(ex.map(_call, jobs))

    @property
    def cohort(self) -> dict[str, dict[str, Dataset]]:
        """kind -> subject -> Dataset."""
        if self._cohort is None:
            params = cohort_params(self.cfg)
            built = self.map(_build_subject, [(self.cfg, i, p) for i, p in enumerate(params)])
            self._cohort = {k: {sid: b[k] for sid, b in zip(self.cfg.subject_ids, built)}
                            for k in COHORT_KINDS}
        return self._cohort

    def _b1(self, d: Dataset) -> Dataset:
        return d.subset(np.flatnonzero(d.bins == ShiftBin.B1))

    def pretrained(self, experiment: str, kind: str, b1_only: bool = False) -> dict[tuple, NetworkParams]:
        cohort = self.cohort[kind]
        todo = [(s, t) for s in self.cfg.seeds for t in self.cfg.targets
                if (kind, b1_only, s, t) not in self._pretrained]
        args = []
        for s, t in todo:
            pool = [cohort[o] for o in self.cfg.subject_ids if o != t]
            if b1_only:
                pool = [self._b1(d) for d in pool]
            args.append((self.cfg, kind, b1_only, s, t, pool))
        for (s, t), (params, info) in zip(todo, self.map(_pretrain_task, args)):
            self._pretrained[(kind, b1_only, s, t)] = params
            self._pretrained[("info", kind, b1_only, s, t)] = info
        out = {}
        for s in self.cfg.seeds:
            for t in self.cfg.targets:
                info = self._pretrained[("info", kind, b1_only, s, t)]
                self.pool_log.append({"experiment": experiment, "seed": s, "target_subject": t,
                                      "pool_subjects": ";".join(info["subjects"]),
                                      "pool_records": info["records"]})
                if t in info["subjects"]:
                    raise LeakageError(f"{t} found in its own pre-training pool")
                out[(s, t)] = self._pretrained[(kind, b1_only, s, t)]
        return out

    def needs_ft(self, experiment: str) -> bool:
        return experiment == "epoch-curves" or "FT" in self.cfg.regimens

    def runs(self, experiment, fn, kind, b1_only=False, data_kind=None):
        cohort = self.cohort[data_kind or kind]
        pre = self.pretrained(experiment, kind, b1_only) if self.needs_ft(experiment) else {}
        keys = [(s, t) for s in self.cfg.seeds for t in self.cfg.targets]
        return keys, self.map(fn, [(self.cfg, s, t, cohort[t], pre.get((s, t))) for s, t in keys])


@dataclass
class ExperimentResult:
    name: str
    rows: list[dict]
    summary: list[dict]
    files: list[Path] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def table_csv(cfg: ExperimentConfig, experiment: str, rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    buf.write(f"# experiment={experiment} config_hash={cfg.hash()} "
              f"seeds={','.join(map(str, cfg.seeds))} version={__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _write(out: Path | None, name: str, text: str, files: list) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    files.append(p)


def summarize(rows: list[dict], group: list[str], value: str) -> list[dict]:
    """Mean and std over all runs, plus the median over seeds of per-seed cohort means."""
    groups: dict[tuple, dict[int, list[float]]] = {}
    for r in rows:
        groups.setdefault(tuple(r[g] for g in group), {}).setdefault(r["seed"], []).append(r[value])
    out = []
    for key in sorted(groups, key=_sort_key):
        per_seed = groups[key]
        allv = np.array([v for s in sorted(per_seed) for v in per_seed[s]])
        seed_means = [float(np.mean(per_seed[s])) for s in sorted(per_seed)]
        out.append({**dict(zip(group, key)), "n_runs": len(allv), "mean_deg": float(allv.mean()),
                    "std_deg": float(allv.std()), "median_seed_mean_deg": float(np.median(seed_means))})
    return out


def _sort_key(key):
    return tuple((0, k) if isinstance(k, (int, float)) else (1, str(k)) for k in key)


def run_data_scale_sweep(cfg: ExperimentConfig, out: Path | None = None, bench: Workbench | None = None,
                         jobs: int = 1) -> ExperimentResult:
    bench = bench or Workbench(cfg, jobs)
    keys, results = bench.runs("data-scale", _data_scale_task, "base")
    rows = sorted((r for rs, _ in results for r in rs),
                  key=lambda r: (r["regimen"], r["fraction"], r["seed"], r["subject"]))
    summary = summarize(rows, ["regimen", "fraction"], "test_accuracy_deg")
    res = ExperimentResult("data-scale", rows, summary)
    cols = ["regimen", "fraction", "seed", "subject", "n_train", "test_accuracy_deg",
            "val_accuracy_deg", "best_epoch"]
    _write(out, "data_scale.csv", table_csv(cfg, "data-scale", rows, cols), res.files)
    _write(out, "data_scale_summary.csv",
           table_csv(cfg, "data-scale", summary, ["regimen", "fraction", "n_runs", "mean_deg", "std_deg",
                                                  "median_seed_mean_deg"]), res.files)
    for reg in cfg.regimens:
        maps = [m[reg] for _, m in results if reg in m]
        if maps:
            avg = average_maps(maps)
            res.extra[f"map_{reg}"] = avg
            _write(out, f"accuracy_map_{reg}.csv", avg.to_csv(), res.files)
            _write(out, f"accuracy_map_{reg}.txt", avg.to_text(), res.files)
    return res


def run_shift_bin_study(cfg: ExperimentConfig, out: Path | None = None, bench: Workbench | None = None,
                        jobs: int = 1) -> ExperimentResult:
    bench = bench or Workbench(cfg, jobs)
    _, results = bench.runs("shift-bins", _shift_bin_task, "base", b1_only=True)
    rows = sorted((r for rs in results for r in rs),
                  key=lambda r: (r["regimen"], r["bin"], r["seed"], r["subject"]))
    summary = summarize(rows, ["regimen", "bin"], "accuracy_deg")
    deg = summarize(rows, ["regimen", "bin"], "degradation_deg")
    for s, d in zip(summary, deg):
        s["mean_degradation_deg"] = d["mean_deg"]
        s["median_seed_degradation_deg"] = d["median_seed_mean_deg"]
    res = ExperimentResult("shift-bins", rows, summary)
    _write(out, "shift_bins.csv", table_csv(cfg, "shift-bins", rows, ["regimen", "seed", "subject", "bin",
                                                                      "n_test", "accuracy_deg",
                                                                      "degradation_deg"]), res.files)
    _write(out, "shift_bins_summary.csv",
           table_csv(cfg, "shift-bins", summary, ["regimen", "bin", "n_runs", "mean_deg", "std_deg",
                                                  "median_seed_mean_deg", "mean_degradation_deg",
                                                  "median_seed_degradation_deg"]), res.files)
    return res


def run_extended_range_study(cfg: ExperimentConfig, out: Path | None = None,
                             bench: Workbench | None = None, jobs: int = 1) -> ExperimentResult:
    bench = bench or Workbench(cfg, jobs)
    _, results = bench.runs("extended-range", _extended_task, "extended")
    rows = sorted((r for rs in results for r in rs), key=lambda r: (r["regimen"], r["seed"], r["subject"]))
    summary = summarize(rows, ["regimen"], "test_accuracy_deg")
    rej = []
    for sid in cfg.subject_ids:
        c = bench.cohort["extended"][sid].counters
        rej.append({"subject": sid, "images": c["images"], "draws": c["draws"],
                    "shift_rejections": c["shift_rejections"],
                    "boundary_rejections": c["boundary_rejections"],
                    "admitted_fraction": (c["draws"] - c["shift_rejections"]) / c["draws"]})
    res = ExperimentResult("extended-range", rows, summary, extra={"rejections": rej})
    _write(out, "extended_range.csv", table_csv(cfg, "extended-range", rows,
                                                ["regimen", "seed", "subject", "sigma_mm", "n_train",
                                                 "test_accuracy_deg"]), res.files)
    _write(out, "extended_range_summary.csv",
           table_csv(cfg, "extended-range", summary, ["regimen", "n_runs", "mean_deg", "std_deg",
                                                      "median_seed_mean_deg"]), res.files)
    _write(out, "extended_range_rejections.csv",
           table_csv(cfg, "extended-range", rej, ["subject", "images", "draws", "shift_rejections",
                                                  "boundary_rejections", "admitted_fraction"]), res.files)
    return res


def run_epoch_curves(cfg: ExperimentConfig, out: Path | None = None, bench: Workbench | None = None,
                     jobs: int = 1) -> ExperimentResult:
    bench = bench or Workbench(cfg, jobs)
    _, results = bench.runs("epoch-curves", _epoch_task, "base")
    rows = sorted((r for rs in results for r in rs),
                  key=lambda r: (r["regimen"], r["epoch"], r["seed"], r["subject"]))
    summary = summarize(rows, ["regimen", "epoch"], "val_accuracy_deg")
    res = ExperimentResult("epoch-curves", rows, summary)
    _write(out, "epoch_curves.csv", table_csv(cfg, "epoch-curves", rows, ["regimen", "seed", "subject",
                                                                          "epoch", "val_accuracy_deg"]),
           res.files)
    _write(out, "epoch_curves_summary.csv",
           table_csv(cfg, "epoch-curves", summary, ["regimen", "epoch", "n_runs", "mean_deg", "std_deg",
                                                    "median_seed_mean_deg"]), res.files)
    return res


def run_shift_robustness(cfg: ExperimentConfig, out: Path | None = None, bench: Workbench | None = None,
                         jobs: int = 1) -> ExperimentResult:
    """FS models trained with and without sensor shifts, both tested on shifted records."""
    bench = bench or Workbench(cfg, jobs)
    base, none = bench.cohort["base"], bench.cohort["none"]
    keys = [(s, t) for s in cfg.seeds for t in cfg.targets]
    results = bench.map(_robustness_task, [(cfg, s, t, base[t], none[t]) for s, t in keys])
    rows = sorted((r for rs in results for r in rs), key=lambda r: (r["train_shift"], r["seed"], r["subject"]))
    summary = summarize(rows, ["train_shift"], "test_accuracy_deg")
    res = ExperimentResult("shift-robustness", rows, summary)
    _write(out, "shift_robustness.csv", table_csv(cfg, "shift-robustness", rows,
                                                  ["train_shift", "seed", "subject", "test_accuracy_deg"]),
           res.files)
    return res


RUNNERS = {"data-scale": run_data_scale_sweep, "shift-bins": run_shift_bin_study,
           "extended-range": run_extended_range_study, "epoch-curves": run_epoch_curves}


def write_pool_log(cfg: ExperimentConfig, bench: Workbench, out: Path) -> Path:
    rows = sorted(bench.pool_log, key=lambda r: (r["experiment"], r["seed"], r["target_subject"]))
    files: list[Path] = []
    _write(out, "leakage_pools.csv", table_csv(cfg, "pools", rows, ["experiment", "seed", "target_subject",
                                                                    "pool_subjects", "pool_records"]), files)
    return files[0]


def write_manifest(cfg: ExperimentConfig, bench: Workbench, out: Path, experiments, files) -> Path:
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seeds": list(cfg.seeds),
        "master_seed": cfg.master_seed,
        "experiments": list(experiments),
        "dataset_hashes": {k: {sid: dataset_hash(d) for sid, d in v.items()}
                           for k, v in bench.cohort.items()},
        "outputs": sorted(str(Path(f).relative_to(out)) for f in files),
    }
    p = out / "run_manifest.json"
    p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return p


def run_experiments(cfg: ExperimentConfig, names, out: Path | None, jobs: int = 1,
                    plots: bool = True) -> dict[str, ExperimentResult]:
    """Run the named studies sharing one cohort and pre-training cache."""
    names = list(EXPERIMENTS) if names in ("all", None) else [names] if isinstance(names, str) else list(names)
    unknown = set(names) - set(RUNNERS)
    if unknown:
        raise ConfigError(f"unknown experiment(s) {sorted(unknown)}")
    bench = Workbench(cfg, jobs)
    results = {}
    for name in EXPERIMENTS:
        if name in names:
            log.info("running %s", name)
            results[name] = RUNNERS[name](cfg, out, bench)
    if out is not None:
        files = [f for r in results.values() for f in r.files]
        if bench.pool_log:
            files.append(write_pool_log(cfg, bench, out))
        if plots:
            from .plots import plot_results
            files += plot_results(results, out)
        write_manifest(cfg, bench, out, results, files)
    return results
