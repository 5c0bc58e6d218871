"""Sensor-shift generation, pixel quantization and shift-range binning."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

SHIFT_LIMIT_MM = 5.0


@dataclass(frozen=True)
class Shift2D:
    """Planar sensor displacement in mm, plus its pixel quantization once known."""

    dx_mm: float = 0.0
    dy_mm: float = 0.0
    realized_dx_px: int | None = None
    realized_dy_px: int | None = None

    @property
    def magnitude_mm(self) -> float:
        return math.hypot(self.dx_mm, self.dy_mm)

    @property
    def is_quantized(self) -> bool:
        return self.realized_dx_px is not None and self.realized_dy_px is not None


class ShiftBin(enum.IntEnum):
    """Shift-magnitude test bins: [0, 1], (1, 1.5], (1.5, 2], > 2 mm."""

    B1 = 1
    B2 = 2
    B3 = 3
    B4 = 4


# upper edges (inclusive) of B1..B3
BIN_EDGES_MM = (1.0, 1.5, 2.0)


@dataclass(frozen=True)
class ShiftDistribution:
    kind: str = "gaussian"
    sigma_mm: float = 1.0
    range_mm: float = 2.0
    n_per_axis: int = 5
    limit_mm: float = SHIFT_LIMIT_MM

    def __post_init__(self):
        if self.kind not in ("gaussian", "grid", "none"):
            raise ConfigError(f"unknown shift distribution kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma_mm > 0:
            raise ConfigError("sigma_mm must be positive")
        if self.kind == "grid":
            if self.n_per_axis < 2:
                raise ConfigError("grid needs n_per_axis >= 2")
            if not 0 <= self.range_mm <= self.limit_mm:
                raise ConfigError(f"grid range must lie in [0, {self.limit_mm}] mm")


def draw_gaussian_shift(sigma_mm: float, rng: np.random.Generator,
                        limit_mm: float = SHIFT_LIMIT_MM) -> tuple[Shift2D, int]:
    """Draw one admitted shift and report how many draws were rejected on the way."""
    rejected = 0
    while True:
        dx, dy = rng.normal(0.0, sigma_mm, size=2)
        if abs(dx) <= limit_mm and abs(dy) <= limit_mm:
            return Shift2D(float(dx), float(dy)), rejected
        rejected += 1


def sample_gaussian_shift(sigma_mm: float, rng: np.random.Generator,
                          limit_mm: float = SHIFT_LIMIT_MM) -> Shift2D:
    """Independent N(0, sigma^2) components, resampled while either exceeds the limit."""
    return draw_gaussian_shift(sigma_mm, rng, limit_mm)[0]


def grid_shifts(range_mm: float, n_per_axis: int,
                limit_mm: float = SHIFT_LIMIT_MM) -> list[Shift2D]:
    if n_per_axis < 2:
        raise ConfigError("grid needs n_per_axis >= 2")
    if range_mm > limit_mm:
        raise ConfigError(f"grid range {range_mm} mm exceeds the {limit_mm} mm limit")
    values = np.linspace(-range_mm, range_mm, n_per_axis)
    # exact zero at the centre of odd grids
    if n_per_axis % 2:
        values[n_per_axis // 2] = 0.0
    return [Shift2D(float(dx), float(dy)) for dy in values for dx in values]


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def mm_to_px(shift: Shift2D, scale_px_per_mm: float) -> Shift2D:
    if not scale_px_per_mm > 0:
        raise ConfigError("scale must be positive")
    return replace(
        shift,
        realized_dx_px=round_half_away(shift.dx_mm * scale_px_per_mm),
        realized_dy_px=round_half_away(shift.dy_mm * scale_px_per_mm),
    )


def bin_magnitude(magnitude_mm: float) -> ShiftBin:
    for b, edge in zip(ShiftBin, BIN_EDGES_MM):
        if magnitude_mm <= edge:
            return b
    return ShiftBin.B4


def shift_norm(dx_mm, dy_mm, norm: str = "euclidean"):
    """Shift magnitude; works elementwise on arrays."""
    if norm == "euclidean":
        return np.hypot(dx_mm, dy_mm)
    if norm == "max":
        return np.maximum(np.abs(dx_mm), np.abs(dy_mm))
    raise ConfigError(f"unknown norm {norm!r}")


def bin_shift(shift: Shift2D, norm: str = "euclidean") -> ShiftBin:
    return bin_magnitude(float(shift_norm(shift.dx_mm, shift.dy_mm, norm)))


def bin_array(dx_mm: np.ndarray, dy_mm: np.ndarray, norm: str = "euclidean") -> np.ndarray:
    mag = shift_norm(np.asarray(dx_mm, float), np.asarray(dy_mm, float), norm)
    return 1 + np.searchsorted(np.asarray(BIN_EDGES_MM), mag, side="left")


def write_shift_manifest(shifts: Iterable[Shift2D], path: str | Path,
                         norm: str = "euclidean") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dx_mm", "dy_mm", "dx_px", "dy_px", "bin"])
        for s in shifts:
            w.writerow([repr(s.dx_mm), repr(s.dy_mm),
                        "" if s.realized_dx_px is None else s.realized_dx_px,
                        "" if s.realized_dy_px is None else s.realized_dy_px,
                        bin_shift(s, norm).name])


def read_shift_manifest(path: str | Path) -> list[Shift2D]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            px = row["dx_px"], row["dy_px"]
            out.append(Shift2D(float(row["dx_mm"]), float(row["dy_mm"]),
                               int(px[0]) if px[0] else None,
                               int(px[1]) if px[1] else None))
    return out


def sample_shifts(dist: ShiftDistribution, n: int, rng: np.random.Generator) -> tuple[list[Shift2D], int]:
    """n shifts from a distribution; grid shifts are drawn uniformly from the grid points.

    kind="none" is the unshifted baseline and always yields (0, 0).
    """
    if dist.kind == "gaussian":
        shifts, rejected = [], 0
        for _ in range(n):
            s, r = draw_gaussian_shift(dist.sigma_mm, rng, dist.limit_mm)
            shifts.append(s)
            rejected += r
        return shifts, rejected
    if dist.kind == "none":
        return [Shift2D(0.0, 0.0) for _ in range(n)], 0
    grid = grid_shifts(dist.range_mm, dist.n_per_axis, dist.limit_mm)
    picks = rng.integers(0, len(grid), size=n)
    return [grid[i] for i in picks], 0


def containment_fraction(shifts: Sequence[Shift2D], bound_mm: float) -> tuple[float, float]:
    """(per-axis, joint) fraction of shifts with components inside +-bound."""
    d = np.array([[s.dx_mm, s.dy_mm] for s in shifts])
    inside = np.abs(d) <= bound_mm
    return float(inside.mean()), float(inside.all(axis=1).mean())
