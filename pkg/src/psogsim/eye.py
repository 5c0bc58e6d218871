"""Parametric periocular image renderer standing in for recorded camera frames.

The eye is modelled as flat discs: a skin background, an elliptical eye
opening filled with sclera, and concentric iris/pupil discs that translate
linearly with gaze. Head movement translates the whole eye region.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError
from .csvio import read_commented_csv
from .shifts import Shift2D, round_half_away

H_RANGE_DEG = 20.51
V_RANGE_DEG = 16.7


@dataclass(frozen=True)
class GazeSample:
    x_deg: float
    y_deg: float


@dataclass(frozen=True)
class EyeModelParams:
    iris_radius_mm: float = 3.0
    pupil_radius_mm: float = 1.2
    eye_center_px: tuple[float, float] = (320.0, 240.0)  # (x, y)
    opening_half_width_mm: float = 7.0
    opening_half_height_mm: float = 3.5
    skin: float = 0.55
    sclera: float = 0.85
    iris: float = 0.35
    pupil: float = 0.05
    gaze_gain_px_per_deg: tuple[float, float] = (4.0, 4.0)
    noise_std: float = 0.01
    subject_id: str = "S00"

    def __post_init__(self):
        for name in ("skin", "sclera", "iris", "pupil"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"reflectivity {name}={v} outside [0, 1]")
        if not 0 < self.pupil_radius_mm < self.iris_radius_mm:
            raise ConfigError("need 0 < pupil_radius_mm < iris_radius_mm")
        if min(self.gaze_gain_px_per_deg) <= 0:
            raise ConfigError("gaze gains must be strictly positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")


@dataclass(frozen=True)
class ImageSpec:
    height: int = 480
    width: int = 640
    scale_px_per_mm: float = 20.0
    max_shift_mm: float = 5.0
    # footprint of the sensor windows (rows, cols) for the default 3x5 layout
    array_extent_px: tuple[int, int] = (241, 361)

    @property
    def margin_px(self) -> int:
        return round_half_away(self.max_shift_mm * self.scale_px_per_mm)

    def check_margin(self) -> None:
        need_h = self.array_extent_px[0] + 2 * self.margin_px
        need_w = self.array_extent_px[1] + 2 * self.margin_px
        if self.height < need_h or self.width < need_w:
            raise ConfigError(
                f"image {self.height}x{self.width} too small: need at least "
                f"{need_h}x{need_w} for {self.max_shift_mm} mm shifts")


@dataclass
class EyeImage:
    pixels: np.ndarray
    scale_px_per_mm: float
    gaze_truth: GazeSample
    head_offset_mm: Shift2D = field(default_factory=Shift2D)
    subject_id: str = "S00"


@dataclass(frozen=True)
class StimulusSpec:
    n_fixations: int = 25
    h_range_deg: float = H_RANGE_DEG
    v_range_deg: float = V_RANGE_DEG
    samples_per_fixation: tuple[int, int] = (2, 8)  # inclusive uniform range
    jitter_std_deg: float = 0.25


def stimulus_targets(spec: StimulusSpec) -> list[GazeSample]:
    """Evenly spaced, corner-inclusive square grid of fixation targets, row by row."""
    n = spec.n_fixations
    side = math.isqrt(n)
    if side * side != n:
        raise ConfigError(f"n_fixations={n} is not a perfect square")
    if side == 1:
        return [GazeSample(0.0, 0.0)]
    xs = np.linspace(-spec.h_range_deg, spec.h_range_deg, side)
    ys = np.linspace(-spec.v_range_deg, spec.v_range_deg, side)
    if side % 2:
        xs[side // 2] = ys[side // 2] = 0.0
    return [GazeSample(float(x), float(y)) for y in ys for x in xs]


def _eye_geometry(params: EyeModelParams, gaze: GazeSample, head: Shift2D, scale: float):
    """Opening centre (x, y), pupil-centre displacement from it, and radii in px."""
    head_x = head.dx_mm * scale
    head_y = head.dy_mm * scale
    ox = params.eye_center_px[0] + head_x
    oy = params.eye_center_px[1] + head_y
    gx = gaze.x_deg * params.gaze_gain_px_per_deg[0]
    gy = gaze.y_deg * params.gaze_gain_px_per_deg[1]
    radii = (params.opening_half_width_mm * scale, params.opening_half_height_mm * scale,
             params.iris_radius_mm * scale, params.pupil_radius_mm * scale)
    return (ox, oy), (gx, gy), radii


def feature_bounds(params: EyeModelParams, gaze: GazeSample, head: Shift2D,
                   scale: float) -> tuple[float, float, float, float]:
    """(x_min, x_max, y_min, y_max) covering the eye opening and the full iris disc."""
    (ox, oy), (gx, gy), (a, b, r_iris, _) = _eye_geometry(params, gaze, head, scale)
    return (min(ox - a, ox + gx - r_iris), max(ox + a, ox + gx + r_iris),
            min(oy - b, oy + gy - r_iris), max(oy + b, oy + gy + r_iris))


def render_eye(params: EyeModelParams, gaze: GazeSample, head_offset_mm: Shift2D = Shift2D(),
               image_spec: ImageSpec = ImageSpec(),
               rng: np.random.Generator | None = None) -> EyeImage:
    """Render one grayscale frame.

    Pixel (i, j) has its centre at x=j, y=i. The pupil centre sits at
    eye_center + gaze * gain + head_offset * scale. Noise needs `rng` when
    ``params.noise_std > 0``; without one the frame is noise-free.
    """
    image_spec.check_margin()
    scale = image_spec.scale_px_per_mm
    H, W = image_spec.height, image_spec.width
    (ox, oy), (gx, gy), (a, b, r_iris, r_pupil) = _eye_geometry(params, gaze, head_offset_mm, scale)

    img = np.full((H, W), params.skin, dtype=np.float64)
    # rasterize only inside the opening's bounding box
    r0, r1 = max(0, math.floor(oy - b)), min(H, math.ceil(oy + b) + 1)
    c0, c1 = max(0, math.floor(ox - a)), min(W, math.ceil(ox + a) + 1)
    if r0 < r1 and c0 < c1:
        # coordinates relative to the opening centre first, so integer head
        # offsets translate the raster exactly
        ex = np.arange(c0, c1, dtype=np.float64) - ox
        ey = np.arange(r0, r1, dtype=np.float64)[:, None] - oy
        opening = (ex / a) ** 2 + (ey / b) ** 2 <= 1.0
        d2 = (ex - gx) ** 2 + (ey - gy) ** 2
        patch = np.where(opening, params.sclera, params.skin)
        patch[opening & (d2 <= r_iris ** 2)] = params.iris
        patch[opening & (d2 <= r_pupil ** 2)] = params.pupil
        img[r0:r1, c0:c1] = patch
    if params.noise_std > 0 and rng is not None:
        img += params.noise_std * rng.standard_normal((H, W))
        np.clip(img, 0.0, 1.0, out=img)
    return EyeImage(img, scale, gaze, head_offset_mm, params.subject_id)


@dataclass(frozen=True)
class SessionPlan:
    """Labels and head offsets for every frame of a session, drawn before rendering."""

    gaze: np.ndarray  # (N, 2) degrees
    head_mm: np.ndarray  # (N, 2)
    fixation_index: np.ndarray  # (N,)

    def __len__(self):
        return len(self.gaze)


def plan_session(stimulus: StimulusSpec, head_walk_std_mm: float, rng: np.random.Generator,
                 head_walk_limit_mm: float = 1.0) -> SessionPlan:
    targets = stimulus_targets(stimulus)
    lo, hi = stimulus.samples_per_fixation
    if not 1 <= lo <= hi:
        raise ConfigError("samples_per_fixation must satisfy 1 <= lo <= hi")
    counts = rng.integers(lo, hi + 1, size=len(targets))
    fix = np.repeat(np.arange(len(targets)), counts)
    base = np.array([[t.x_deg, t.y_deg] for t in targets])[fix]
    gaze = base + stimulus.jitter_std_deg * rng.standard_normal(base.shape)
    head = np.zeros_like(gaze)
    if head_walk_std_mm > 0:
        steps = head_walk_std_mm * rng.standard_normal(gaze.shape)
        pos = np.zeros(2)
        for k in range(len(steps)):
            pos = np.clip(pos + steps[k], -head_walk_limit_mm, head_walk_limit_mm)
            head[k] = pos
    return SessionPlan(gaze, head, fix)


def iter_session(stimulus: StimulusSpec, params: EyeModelParams, head_walk_std_mm: float,
                 seed: int, image_spec: ImageSpec = ImageSpec(),
                 head_walk_limit_mm: float = 1.0) -> Iterator[EyeImage]:
    """Lazily render a session; identical output to :func:`generate_session`."""
    plan_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    plan = plan_session(stimulus, head_walk_std_mm, np.random.default_rng(plan_ss),
                        head_walk_limit_mm)
    noise_rng = np.random.default_rng(noise_ss)
    for (x, y), (hx, hy) in zip(plan.gaze, plan.head_mm):
        yield render_eye(params, GazeSample(float(x), float(y)), Shift2D(float(hx), float(hy)),
                         image_spec, noise_rng)


def generate_session(stimulus: StimulusSpec, params: EyeModelParams, head_walk_std_mm: float,
                     seed: int, image_spec: ImageSpec = ImageSpec(),
                     head_walk_limit_mm: float = 1.0) -> list[EyeImage]:
    return list(iter_session(stimulus, params, head_walk_std_mm, seed, image_spec,
                             head_walk_limit_mm))


# Per-subject anatomy ranges (uniform) for synthetic cohorts.
ANATOMY_RANGES = {
    "iris_radius_mm": (2.6, 3.2),
    "pupil_radius_mm": (0.9, 1.5),
    "opening_half_width_mm": (6.5, 7.5),
    "opening_half_height_mm": (3.0, 4.0),
    "skin": (0.45, 0.65),
    "sclera": (0.78, 0.92),
    "iris": (0.2, 0.45),
    "pupil": (0.02, 0.1),
    "gain_x": (3.5, 4.5),
    "gain_y": (3.5, 4.5),
    "center_dx_px": (-40.0, 40.0),
    "center_dy_px": (-20.0, 20.0),
}


def draw_subject(rng: np.random.Generator, subject_id: str,
                 base: EyeModelParams = EyeModelParams()) -> EyeModelParams:
    u = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in ANATOMY_RANGES.items()}
    cx, cy = base.eye_center_px
    return replace(
        base,
        iris_radius_mm=u["iris_radius_mm"],
        pupil_radius_mm=u["pupil_radius_mm"],
        opening_half_width_mm=u["opening_half_width_mm"],
        opening_half_height_mm=u["opening_half_height_mm"],
        skin=u["skin"], sclera=u["sclera"], iris=u["iris"], pupil=u["pupil"],
        gaze_gain_px_per_deg=(u["gain_x"], u["gain_y"]),
        eye_center_px=(cx + round(u["center_dx_px"]), cy + round(u["center_dy_px"])),
        subject_id=subject_id,
    )


# -- portable graymap I/O and session manifests --------------------------------

def write_pgm(path: str | Path, pixels: np.ndarray, maxval: int = 65535) -> None:
    """Binary (P5) graymap; 16-bit big-endian when maxval > 255."""
    q = np.rint(np.clip(pixels, 0.0, 1.0) * maxval)
    data = q.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(data)


def read_pgm(path: str | Path) -> np.ndarray:
    """Read P2 or P5 graymaps (8 or 16 bit) as floats in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        dtype = ">u2" if maxval > 255 else np.uint8
        arr = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos + 1)
    elif magic == "P2":
        arr = np.array(raw[pos:].split()[: w * h], dtype=np.int64)
    else:
        raise ValueError(f"{path}: unsupported graymap type {magic}")
    return arr.reshape(h, w).astype(np.float64) / maxval


MANIFEST_COLUMNS = ["index", "subject_id", "x_deg", "y_deg", "head_dx_mm", "head_dy_mm", "image"]


def write_session(images: Sequence[EyeImage], out_dir: str | Path,
                  dump_images: bool = True) -> Path:
    """Write graymaps plus ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        scale = images[0].scale_px_per_mm if images else 0.0
        fh.write(f"# scale_px_per_mm={scale!r}\n")
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for k, im in enumerate(images):
            name = f"{im.subject_id}_{k:05d}.pgm"
            if dump_images:
                write_pgm(out / name, im.pixels)
            w.writerow([k, im.subject_id, repr(im.gaze_truth.x_deg), repr(im.gaze_truth.y_deg),
                        repr(im.head_offset_mm.dx_mm), repr(im.head_offset_mm.dy_mm),
                        name if dump_images else ""])
    return manifest


def load_session_dir(manifest_path: str | Path,
                     scale_px_per_mm: float | None = None) -> Iterator[EyeImage]:
    """Ingest externally supplied frames described by a session manifest.

    Image paths are resolved relative to the manifest. The scale comes from
    the ``# scale_px_per_mm=`` header line unless given explicitly.
    """
    manifest_path = Path(manifest_path)
    meta, rows = read_commented_csv(manifest_path)
    if scale_px_per_mm is None:
        if "scale_px_per_mm" not in meta:
            raise ConfigError(f"{manifest_path}: no scale given and none in header")
        scale_px_per_mm = float(meta["scale_px_per_mm"])
    for row in rows:
        pixels = read_pgm(manifest_path.parent / row["image"])
        yield EyeImage(pixels, scale_px_per_mm,
                       GazeSample(float(row["x_deg"]), float(row["y_deg"])),
                       Shift2D(float(row["head_dx_mm"]), float(row["head_dy_mm"])),
                       row["subject_id"])
