"""Render a few eye images and print the 3x5 sensor response for each.

    python scripts/render_examples.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from psogsim.eye import EyeModelParams, GazeSample, render_eye, write_pgm
from psogsim.sensor import ArrayLayout, receptive_kernel, simulate_frame
from psogsim.shifts import Shift2D, mm_to_px

out = Path(sys.argv[1] if len(sys.argv) > 1 else "examples_out")
out.mkdir(parents=True, exist_ok=True)
params = EyeModelParams()
layout, kernel = ArrayLayout(), receptive_kernel(121)
rng = np.random.default_rng(0)

for gx, gy in [(0, 0), (-20.51, 0), (20.51, 16.7)]:
    img = render_eye(params, GazeSample(gx, gy), rng=rng)
    write_pgm(out / f"gaze_{gx:+06.2f}_{gy:+06.2f}.pgm", img.pixels)
    for dx, dy in [(0, 0), (1, 0), (0, -2)]:
        f = simulate_frame(img, layout, kernel, mm_to_px(Shift2D(dx, dy), img.scale_px_per_mm))
        print(f"gaze ({gx:+.2f}, {gy:+.2f}) deg, shift ({dx}, {dy}) mm")
        print(np.array2string(f.values, precision=3, suppress_small=True))
print(f"images in {out}")
