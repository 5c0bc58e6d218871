"""Spatial accuracy and its breakdowns over gaze position, shift range and subject."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eye import H_RANGE_DEG, V_RANGE_DEG
from .shifts import ShiftBin, bin_array


def angular_errors(predictions, truths) -> np.ndarray:
    """Per-sample Euclidean error on the gaze plane, in degrees."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
    t = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return np.hypot(p[:, 0] - t[:, 0], p[:, 1] - t[:, 1])


def spatial_accuracy(predictions, truths) -> float:
    err = angular_errors(predictions, truths)
    if len(err) == 0:
        raise ValueError("spatial accuracy of an empty set")
    return float(err.mean())


@dataclass(frozen=True)
class GridSpec:
    x_edges: tuple[float, ...] = tuple(np.linspace(-H_RANGE_DEG, H_RANGE_DEG, 5))
    y_edges: tuple[float, ...] = tuple(np.linspace(-V_RANGE_DEG, V_RANGE_DEG, 5))

    @classmethod
    def even(cls, n_cols: int = 4, n_rows: int = 4, h_range: float = H_RANGE_DEG,
             v_range: float = V_RANGE_DEG) -> "GridSpec":
        return cls(tuple(np.linspace(-h_range, h_range, n_cols + 1)),
                   tuple(np.linspace(-v_range, v_range, n_rows + 1)))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.y_edges) - 1, len(self.x_edges) - 1

    def locate(self, gaze: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) bin of each gaze point; points outside clamp to edge bins."""
        rows, cols = self.shape
        c = np.clip(np.searchsorted(self.x_edges, gaze[:, 0], side="right") - 1, 0, cols - 1)
        r = np.clip(np.searchsorted(self.y_edges, gaze[:, 1], side="right") - 1, 0, rows - 1)
        return r, c


@dataclass
class SpatialAccuracyMap:
    grid: GridSpec
    mean: np.ndarray  # (rows, cols), NaN where empty
    std: np.ndarray
    count: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.count == 0

    def overall(self) -> float:
        ok = ~self.empty
        return float(np.sum(self.mean[ok] * self.count[ok]) / np.sum(self.count[ok]))

    def to_text(self, decimals: int = 2) -> str:
        """Mean +- std per cell; row/column boundaries printed in degrees."""
        rows, cols = self.grid.shape
        fmt = f"{{:.{decimals}f}}"
        cells = [[("--" if self.empty[r, c] else
                   f"{fmt.format(self.mean[r, c])}±{fmt.format(self.std[r, c])}")
                  for c in range(cols)] for r in range(rows)]
        width = max(12, max(len(s) for row in cells for s in row) + 2)
        xs = " " * 10 + "".join(f"{x:>{width}.2f}" for x in self.grid.x_edges)
        lines = [xs]
        # top row of the printout is the highest vertical gaze
        for r in reversed(range(rows)):
            lines.append(f"{self.grid.y_edges[r + 1]:>10.2f}")
            lines.append(" " * 10 + " " * (width // 2) + "".join(f"{s:^{width}}" for s in cells[r]))
        lines.append(f"{self.grid.y_edges[0]:>10.2f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "x_lo", "x_hi", "y_lo", "y_hi", "count", "mean_deg", "std_deg"])
        rows, cols = self.grid.shape
        for r in range(rows):
            for c in range(cols):
                w.writerow([r, c, f"{self.grid.x_edges[c]:.4f}", f"{self.grid.x_edges[c + 1]:.4f}",
                            f"{self.grid.y_edges[r]:.4f}", f"{self.grid.y_edges[r + 1]:.4f}",
                            int(self.count[r, c]),
                            "" if self.empty[r, c] else f"{self.mean[r, c]:.6f}",
                            "" if self.empty[r, c] else f"{self.std[r, c]:.6f}"])
        return buf.getvalue()


def accuracy_map(predictions, truths, grid: GridSpec = GridSpec()) -> SpatialAccuracyMap:
    """Bin test samples by their true gaze; per-bin mean and std of the angular error."""
    t = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
    err = angular_errors(predictions, t)
    r, c = grid.locate(t)
    shape = grid.shape
    count = np.zeros(shape, dtype=np.int64)
    mean = np.full(shape, np.nan)
    std = np.full(shape, np.nan)
    np.add.at(count, (r, c), 1)
    for i in range(shape[0]):
        for j in range(shape[1]):
            sel = err[(r == i) & (c == j)]
            if len(sel):
                mean[i, j] = sel.mean()
                std[i, j] = sel.std()
    return SpatialAccuracyMap(grid, mean, std, count)


def average_maps(maps: list[SpatialAccuracyMap]) -> SpatialAccuracyMap:
    """Cell-wise average of per-subject maps, skipping maps where a cell is empty."""
    grid = maps[0].grid
    means = np.array([m.mean for m in maps])
    stds = np.array([m.std for m in maps])
    counts = np.array([m.count for m in maps]).sum(axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-empty cells
        mean = np.nanmean(means, axis=0)
        std = np.nanmean(stds, axis=0)
    return SpatialAccuracyMap(grid, mean, std, counts)


def accuracy_by_shift_bin(predictions, truths, shifts, norm: str = "euclidean") -> dict[ShiftBin, float]:
    """Spatial accuracy within each shift bin; empty bins are absent from the result.

    `shifts` is an (N, 2) array of (dx_mm, dy_mm) or a sequence of Shift2D.
    """
    s = shifts
    if len(s) and hasattr(s[0], "dx_mm"):
        s = [(x.dx_mm, x.dy_mm) for x in s]
    s = np.asarray(s, dtype=np.float64).reshape(-1, 2)
    err = angular_errors(predictions, truths)
    bins = bin_array(s[:, 0], s[:, 1], norm)
    return {b: float(err[bins == b].mean()) for b in ShiftBin if np.any(bins == b)}


def bin_degradation(per_bin: dict[ShiftBin, float]) -> dict[ShiftBin, float]:
    """Accuracy of each bin minus the in-training (B1) benchmark."""
    base = per_bin[ShiftBin.B1]
    return {b: v - base for b, v in per_bin.items()}


def relative_change(baseline_deg: float, comparison_deg: float) -> float:
    """Percent change of comparison versus baseline."""
    if baseline_deg == 0:
        raise ZeroDivisionError("relative change against a zero baseline")
    if baseline_deg < 0:
        raise ValueError("baseline accuracy must be positive")
    return 100.0 * (comparison_deg - baseline_deg) / baseline_deg


@dataclass
class AccuracyReport:
    overall: float
    per_bin: dict[ShiftBin, float] = field(default_factory=dict)
    per_subject: dict[str, float] = field(default_factory=dict)
    degradation: dict[ShiftBin, float] = field(default_factory=dict)
    bin_counts: dict[ShiftBin, int] = field(default_factory=dict)


def accuracy_report(predictions, truths, shifts_mm, subjects, norm: str = "euclidean") -> AccuracyReport:
    err = angular_errors(predictions, truths)
    s = np.asarray(shifts_mm, dtype=np.float64).reshape(-1, 2)
    bins = bin_array(s[:, 0], s[:, 1], norm)
    subjects = np.asarray(subjects, dtype=str)
    per_bin = {b: float(err[bins == b].mean()) for b in ShiftBin if np.any(bins == b)}
    counts = {b: int(np.sum(bins == b)) for b in per_bin}
    per_subject = {sid: float(err[subjects == sid].mean()) for sid in sorted(set(subjects.tolist()))}
    deg = bin_degradation(per_bin) if ShiftBin.B1 in per_bin else {}
    return AccuracyReport(float(err.mean()), per_bin, per_subject, deg, counts)
