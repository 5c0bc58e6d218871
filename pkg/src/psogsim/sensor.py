"""3x5 photosensor array: Gaussian receptive fields over shifted, head-compensated crops."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import BoundaryError, ConfigError
from .eye import EyeImage, GazeSample
from .shifts import Shift2D, bin_shift, round_half_away, SHIFT_LIMIT_MM


def window_side(size_px: int, interpretation: str = "side") -> int:
    """Window side length for a nominal window size.

    "side" reads the size as the square's side (121 -> 121x121); "area" reads
    it as the pixel count (121 -> 11x11).
    """
    if interpretation == "side":
        return int(size_px)
    if interpretation == "area":
        side = math.isqrt(int(size_px))
        if side * side != size_px:
            raise ConfigError(f"window area {size_px} is not a perfect square")
        return side
    raise ConfigError(f"unknown window interpretation {interpretation!r}")


@dataclass(frozen=True)
class ArrayLayout:
    rows: int = 3
    cols: int = 5
    window_side_px: int = 121
    pitch_px: int = 60
    array_center_px: tuple[int, int] = (320, 240)  # (x, y)

    def __post_init__(self):
        if self.pitch_px <= 0:
            raise ConfigError("pitch must be positive")
        if self.window_side_px % 2 == 0:
            raise ConfigError("window side must be odd")

    @property
    def half(self) -> int:
        return self.window_side_px // 2

    @property
    def extent_px(self) -> tuple[int, int]:
        """(rows, cols) pixel footprint of all windows together."""
        return ((self.rows - 1) * self.pitch_px + self.window_side_px,
                (self.cols - 1) * self.pitch_px + self.window_side_px)

    def sensor_centers(self) -> np.ndarray:
        """(rows, cols, 2) array of (x, y) window centres at zero offset."""
        cx, cy = self.array_center_px
        ys = cy + (np.arange(self.rows) - (self.rows - 1) / 2) * self.pitch_px
        xs = cx + (np.arange(self.cols) - (self.cols - 1) / 2) * self.pitch_px
        if not (np.all(ys == np.round(ys)) and np.all(xs == np.round(xs))):
            raise ConfigError("sensor centres must fall on integer pixels")
        out = np.empty((self.rows, self.cols, 2), dtype=np.int64)
        out[..., 0] = xs[None, :]
        out[..., 1] = ys[:, None]
        return out


@dataclass(frozen=True, eq=False)
class ReceptiveKernel:
    weights: np.ndarray
    sigma_px: float

    @property
    def side(self) -> int:
        return self.weights.shape[0]


def receptive_kernel(window_side_px: int = 121) -> ReceptiveKernel:
    """Unit-sum isotropic Gaussian with sigma equal to a quarter of the window side."""
    if window_side_px < 1 or window_side_px % 2 == 0:
        raise ConfigError(f"window side must be a positive odd integer, got {window_side_px}")
    sigma = window_side_px / 4.0
    d = np.arange(window_side_px) - window_side_px // 2
    g = np.exp(-(d.astype(np.float64) ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    w.setflags(write=False)
    return ReceptiveKernel(w, sigma)


@dataclass
class SensorFrame:
    values: np.ndarray  # (rows, cols)
    shift: Shift2D
    gaze_truth: GazeSample
    subject_id: str
    offset_px: tuple[int, int] = (0, 0)
    head_offset_mm: Shift2D = field(default_factory=Shift2D)


def crop_offset(image: EyeImage, shift: Shift2D, compensate_head: bool = True,
                max_shift_mm: float = SHIFT_LIMIT_MM) -> tuple[int, int]:
    """Total (dx, dy) pixel offset of the sampling crop.

    The crop is the image shrunk by ``round(max_shift_mm * scale)`` px on
    every side; an offset moving it past the image border raises
    BoundaryError.
    """
    if not shift.is_quantized:
        raise ValueError("shift has no realized pixel offset; call mm_to_px first")
    dx, dy = shift.realized_dx_px, shift.realized_dy_px
    scale = image.scale_px_per_mm
    if compensate_head:
        dx += round_half_away(image.head_offset_mm.dx_mm * scale)
        dy += round_half_away(image.head_offset_mm.dy_mm * scale)
    margin = round_half_away(max_shift_mm * scale)
    if abs(dx) > margin or abs(dy) > margin:
        raise BoundaryError(
            f"crop offset ({dx}, {dy}) px exceeds the {margin} px margin "
            f"({max_shift_mm} mm at {scale} px/mm)")
    return dx, dy


def patch_weights(pixels: np.ndarray, layout: ArrayLayout, kernel: ReceptiveKernel,
                  offset_px: tuple[int, int]) -> np.ndarray:
    if kernel.side != layout.window_side_px:
        raise ConfigError("kernel size does not match layout window")
    h = layout.half
    centers = layout.sensor_centers()
    dx, dy = offset_px
    H, W = pixels.shape
    out = np.empty((layout.rows, layout.cols))
    for r in range(layout.rows):
        for c in range(layout.cols):
            x, y = centers[r, c, 0] + dx, centers[r, c, 1] + dy
            if y - h < 0 or x - h < 0 or y + h >= H or x + h >= W:
                raise BoundaryError(f"sensor ({r}, {c}) window leaves the image at offset {offset_px}")
            patch = pixels[y - h:y + h + 1, x - h:x + h + 1]
            out[r, c] = np.einsum("ij,ij->", kernel.weights, patch)
    return out


def simulate_frame(image: EyeImage, layout: ArrayLayout, kernel: ReceptiveKernel,
                   shift: Shift2D, compensate_head: bool = True,
                   max_shift_mm: float = SHIFT_LIMIT_MM) -> SensorFrame:
    offset = crop_offset(image, shift, compensate_head, max_shift_mm)
    values = patch_weights(image.pixels, layout, kernel, offset)
    return SensorFrame(values, shift, image.gaze_truth, image.subject_id, offset,
                       image.head_offset_mm)


def sensor_names(rows: int = 3, cols: int = 5) -> list[str]:
    return [f"s{r}{c}" for r in range(rows) for c in range(cols)]


def write_frames(frames: Iterable[SensorFrame], path: str | Path, norm: str = "euclidean") -> None:
    frames = list(frames)
    rows, cols = frames[0].values.shape if frames else (3, 5)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "x_deg", "y_deg", "dx_mm", "dy_mm", *sensor_names(rows, cols), "bin"])
        for f in frames:
            w.writerow([f.subject_id, repr(f.gaze_truth.x_deg), repr(f.gaze_truth.y_deg),
                        repr(f.shift.dx_mm), repr(f.shift.dy_mm),
                        *(repr(float(v)) for v in f.values.ravel()),
                        bin_shift(f.shift, norm).name])
