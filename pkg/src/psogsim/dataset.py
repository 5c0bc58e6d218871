"""Supervised (sensor frame -> gaze) datasets, split protocols and persistence."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundaryError, ConfigError
from .csvio import read_commented_csv
from .eye import EyeImage, GazeSample
from .sensor import ArrayLayout, ReceptiveKernel, SensorFrame, sensor_names, simulate_frame
from .shifts import (SHIFT_LIMIT_MM, Shift2D, ShiftBin, ShiftDistribution, bin_array,
                     draw_gaussian_shift, grid_shifts, mm_to_px)


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        shape = X.shape
        flat = X.reshape(shape[0], -1)
        return ((flat - self.mean) / self.std).reshape(shape)


@dataclass(eq=False)
class Dataset:
    """Column-oriented records; arrays are frozen after construction."""

    X: np.ndarray  # (N, rows, cols) sensor values
    gaze: np.ndarray  # (N, 2) degrees
    subjects: np.ndarray  # (N,) str
    shift_mm: np.ndarray  # (N, 2)
    shift_px: np.ndarray  # (N, 2) int
    scale_px_per_mm: float = 20.0
    bin_norm: str = "euclidean"
    normalization_stats: NormStats | None = None
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.gaze = np.asarray(self.gaze, dtype=np.float64).reshape(-1, 2)
        self.subjects = np.asarray(self.subjects, dtype=str)
        self.shift_mm = np.asarray(self.shift_mm, dtype=np.float64).reshape(-1, 2)
        self.shift_px = np.asarray(self.shift_px, dtype=np.int64).reshape(-1, 2)
        n = len(self.X)
        if not (len(self.gaze) == len(self.subjects) == len(self.shift_mm) == len(self.shift_px) == n):
            raise ValueError("record columns differ in length")
        for a in (self.X, self.gaze, self.subjects, self.shift_mm, self.shift_px):
            a.setflags(write=False)

    def __len__(self):
        return len(self.X)

    @property
    def bins(self) -> np.ndarray:
        return bin_array(self.shift_mm[:, 0], self.shift_mm[:, 1], self.bin_norm)

    @property
    def subject_ids(self) -> set[str]:
        return set(self.subjects.tolist())

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], gaze=self.gaze[idx], subjects=self.subjects[idx],
                       shift_mm=self.shift_mm[idx], shift_px=self.shift_px[idx],
                       counters=dict(self.counters))

    def record(self, i: int) -> SensorFrame:
        s = Shift2D(float(self.shift_mm[i, 0]), float(self.shift_mm[i, 1]),
                    int(self.shift_px[i, 0]), int(self.shift_px[i, 1]))
        g = GazeSample(float(self.gaze[i, 0]), float(self.gaze[i, 1]))
        return SensorFrame(self.X[i].copy(), s, g, str(self.subjects[i]))


def concat(datasets: Sequence[Dataset]) -> Dataset:
    if not datasets:
        raise ValueError("nothing to concatenate")
    first = datasets[0]
    return Dataset(np.concatenate([d.X for d in datasets]),
                   np.concatenate([d.gaze for d in datasets]),
                   np.concatenate([d.subjects for d in datasets]),
                   np.concatenate([d.shift_mm for d in datasets]),
                   np.concatenate([d.shift_px for d in datasets]),
                   first.scale_px_per_mm, first.bin_norm)


def build_dataset(sessions: Iterable[EyeImage], shift_distribution: ShiftDistribution,
                  layout: ArrayLayout, kernel: ReceptiveKernel, seed: int,
                  shifts_per_image: int = 1, pairing: str = "single",
                  compensate_head: bool = True, bin_norm: str = "euclidean",
                  max_resample: int = 1000) -> Dataset:
    """Pair every image with independently sampled shifts and simulate the array.

    pairing="single" draws ``shifts_per_image`` shifts per image;
    pairing="all" (grid only) uses every grid point for every image.
    Gaussian shifts that leave the image are redrawn; grid shifts are dropped.
    ``counters`` records rejections from the 5 mm limit and from crop bounds.
    """
    if pairing not in ("single", "all"):
        raise ConfigError(f"unknown pairing {pairing!r}")
    if pairing == "all" and shift_distribution.kind != "grid":
        raise ConfigError("pairing='all' needs a grid distribution")
    rng = np.random.default_rng(seed)
    gaussian = shift_distribution.kind == "gaussian"
    grid = None if shift_distribution.kind != "grid" else grid_shifts(shift_distribution.range_mm,
                                             shift_distribution.n_per_axis,
                                             shift_distribution.limit_mm)
    cols = {k: [] for k in ("X", "gaze", "subjects", "shift_mm", "shift_px")}
    counters = {"images": 0, "draws": 0, "shift_rejections": 0, "boundary_rejections": 0}
    scale = None

    def draw():
        if gaussian:
            s, rej = draw_gaussian_shift(shift_distribution.sigma_mm, rng, shift_distribution.limit_mm)
            counters["draws"] += rej + 1
            counters["shift_rejections"] += rej
            return s
        counters["draws"] += 1
        if grid is None:
            return Shift2D(0.0, 0.0)
        return grid[int(rng.integers(len(grid)))]

    def add(frame: SensorFrame):
        cols["X"].append(frame.values)
        cols["gaze"].append((frame.gaze_truth.x_deg, frame.gaze_truth.y_deg))
        cols["subjects"].append(frame.subject_id)
        cols["shift_mm"].append((frame.shift.dx_mm, frame.shift.dy_mm))
        cols["shift_px"].append((frame.shift.realized_dx_px, frame.shift.realized_dy_px))

    for image in sessions:
        if scale is None:
            scale = image.scale_px_per_mm
        elif image.scale_px_per_mm != scale:
            raise ConfigError("sessions in one dataset must share a px/mm scale")
        counters["images"] += 1
        if pairing == "all":
            for s in grid:
                try:
                    add(simulate_frame(image, layout, kernel, mm_to_px(s, scale), compensate_head,
                                       shift_distribution.limit_mm))
                except BoundaryError:
                    counters["boundary_rejections"] += 1
            continue
        for _ in range(shifts_per_image):
            for _attempt in range(max_resample):
                s = mm_to_px(draw(), scale)
                try:
                    add(simulate_frame(image, layout, kernel, s, compensate_head,
                                       shift_distribution.limit_mm))
                    break
                except BoundaryError:
                    counters["boundary_rejections"] += 1
                    if not gaussian:
                        break
            else:
                raise BoundaryError(f"no admissible shift after {max_resample} draws")
    n = len(cols["X"])
    X = np.array(cols["X"]) if n else np.zeros((0, layout.rows, layout.cols))
    return Dataset(X, np.array(cols["gaze"]).reshape(-1, 2), np.array(cols["subjects"], dtype=str),
                   np.array(cols["shift_mm"]).reshape(-1, 2), np.array(cols["shift_px"]).reshape(-1, 2),
                   scale if scale is not None else 20.0, bin_norm, counters=counters)


# -- splits --------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.1, 0.3)
    seed: int = 0
    mode: str = "random"

    def __post_init__(self):
        if len(self.fractions) != 3 or min(self.fractions) < 0:
            raise ConfigError("need three non-negative fractions")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"fractions {self.fractions} do not sum to 1")
        if self.mode not in ("random", "shift-binned"):
            raise ConfigError(f"unknown split mode {self.mode!r}")


@dataclass(eq=False)
class Splits:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    test_bins: dict[ShiftBin, np.ndarray] | None = None

    def parts(self) -> dict[str, np.ndarray]:
        out = {"train": self.train, "validation": self.validation, "test": self.test}
        for b, idx in (self.test_bins or {}).items():
            if b != ShiftBin.B1:
                out[f"test_{b.name}"] = idx
        return out

    def to_json(self) -> str:
        d = {"train": self.train.tolist(), "validation": self.validation.tolist(),
             "test": self.test.tolist()}
        if self.test_bins is not None:
            d["test_bins"] = {b.name: v.tolist() for b, v in self.test_bins.items()}
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "Splits":
        d = json.loads(text)
        arr = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
        bins = d.get("test_bins")
        return cls(arr(d["train"]), arr(d["validation"]), arr(d["test"]),
                   None if bins is None else {ShiftBin[k]: arr(v) for k, v in bins.items()})


def largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    """Integer part sizes summing to n; leftovers go to the largest remainders (ties: first)."""
    exact = [f * n for f in fractions]
    sizes = [math.floor(e + 1e-9) for e in exact]
    rema = [e - s for e, s in zip(exact, sizes)]
    for k in sorted(range(len(sizes)), key=lambda i: (-rema[i], i))[: n - sum(sizes)]:
        sizes[k] += 1
    return sizes


def _partition(indices: np.ndarray, fractions, rng: np.random.Generator):
    sizes = largest_remainder(len(indices), fractions)
    perm = indices[rng.permutation(len(indices))]
    a, b = sizes[0], sizes[0] + sizes[1]
    return np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]), sizes


def split_random(dataset: Dataset, spec: SplitSpec) -> Splits:
    tr, va, te, sizes = _partition(np.arange(len(dataset)), spec.fractions,
                                   np.random.default_rng(spec.seed))
    for name, size, f in zip(("train", "validation", "test"), sizes, spec.fractions):
        if size == 0 and f > 0:
            raise ConfigError(f"{name} partition is empty for N={len(dataset)}")
    return Splits(tr, va, te)


def split_shift_binned(dataset: Dataset, spec: SplitSpec) -> Splits:
    """B1 records are split by the fractions; B2-B4 records become dedicated test sets."""
    bins = dataset.bins
    b1 = np.flatnonzero(bins == ShiftBin.B1)
    tr, va, te, _ = _partition(b1, spec.fractions, np.random.default_rng(spec.seed))
    test_bins = {ShiftBin.B1: te}
    for b in (ShiftBin.B2, ShiftBin.B3, ShiftBin.B4):
        test_bins[b] = np.flatnonzero(bins == b)
    empty = [b.name for b, v in test_bins.items() if len(v) == 0]
    if empty:
        warnings.warn(f"shift-binned split: empty test bins {empty}", stacklevel=2)
    return Splits(tr, va, te, test_bins)


def split(dataset: Dataset, spec: SplitSpec) -> Splits:
    return split_random(dataset, spec) if spec.mode == "random" else split_shift_binned(dataset, spec)


def subset_training(splits: Splits, fraction: float, seed: int) -> Splits:
    """Keep a fraction of the training indices; subsets at one seed are nested."""
    if not 0 < fraction <= 1:
        raise ConfigError("fraction must lie in (0, 1]")
    n = math.floor(fraction * len(splits.train) + 0.5)
    if n == 0:
        raise ConfigError(f"fraction {fraction} leaves no training records")
    order = np.random.default_rng(seed).permutation(len(splits.train))
    return replace(splits, train=np.sort(splits.train[order[:n]]))


def normalize(dataset: Dataset, train_idx) -> tuple[Dataset, NormStats]:
    """Per-sensor z-score with training-set statistics (std floored at 1e-8)."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if len(train_idx) == 0:
        raise ValueError("empty training set")
    flat = dataset.X[train_idx].reshape(len(train_idx), -1)
    stats = NormStats(flat.mean(axis=0), np.maximum(flat.std(axis=0), 1e-8))
    out = replace(dataset, X=stats.apply(dataset.X), normalization_stats=stats,
                  counters=dict(dataset.counters))
    return out, stats


# -- persistence ---------------------------------------------------------------

def dataset_to_csv(dataset: Dataset) -> str:
    rows, cols = dataset.X.shape[1:] if dataset.X.ndim == 3 else (3, 5)
    lines = [f"# scale_px_per_mm={dataset.scale_px_per_mm!r} bin_norm={dataset.bin_norm} "
             f"shape={rows}x{cols}"]
    if dataset.normalization_stats is not None:
        st = dataset.normalization_stats
        lines.append("# norm_mean=" + ",".join(repr(float(v)) for v in st.mean))
        lines.append("# norm_std=" + ",".join(repr(float(v)) for v in st.std))
    lines.append(",".join(["subject", "x_deg", "y_deg", "dx_mm", "dy_mm", "bin",
                           *sensor_names(rows, cols)]))
    bins = dataset.bins
    for i in range(len(dataset)):
        vals = [str(dataset.subjects[i]), repr(float(dataset.gaze[i, 0])), repr(float(dataset.gaze[i, 1])),
                repr(float(dataset.shift_mm[i, 0])), repr(float(dataset.shift_mm[i, 1])),
                ShiftBin(int(bins[i])).name, *(repr(float(v)) for v in dataset.X[i].ravel())]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(dataset))


def load_dataset(path: str | Path) -> Dataset:
    meta, rows = read_commented_csv(path)
    scale = float(meta.get("scale_px_per_mm", "20.0"))
    bin_norm = meta.get("bin_norm", "euclidean")
    r, c = (int(v) for v in meta.get("shape", "3x5").split("x"))
    names = sensor_names(r, c)
    n = len(rows)
    X = np.array([[float(row[k]) for k in names] for row in rows]).reshape(n, r, c)
    gaze = np.array([[float(row["x_deg"]), float(row["y_deg"])] for row in rows]).reshape(-1, 2)
    shift_mm = np.array([[float(row["dx_mm"]), float(row["dy_mm"])] for row in rows]).reshape(-1, 2)
    shift_px = np.array([[mm_to_px(Shift2D(dx, dy), scale).realized_dx_px,
                          mm_to_px(Shift2D(dx, dy), scale).realized_dy_px] for dx, dy in shift_mm],
                        dtype=np.int64).reshape(-1, 2)
    stats = None
    if "norm_mean" in meta:
        stats = NormStats(np.array([float(v) for v in meta["norm_mean"].split(",")]),
                          np.array([float(v) for v in meta["norm_std"].split(",")]))
    subjects = np.array([row["subject"] for row in rows], dtype=str)
    return Dataset(X, gaze, subjects, shift_mm, shift_px, scale, bin_norm, stats)


def save_splits(splits: Splits, path: str | Path) -> None:
    Path(path).write_text(splits.to_json() + "\n")


def load_splits(path: str | Path) -> Splits:
    return Splits.from_json(Path(path).read_text())
