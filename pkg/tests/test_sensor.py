import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psogsim.errors import BoundaryError, ConfigError
from psogsim.eye import EyeImage, EyeModelParams, GazeSample, render_eye
from psogsim.sensor import (ArrayLayout, crop_offset, patch_weights, receptive_kernel, sensor_names,
                            simulate_frame, window_side, write_frames)
from psogsim.shifts import Shift2D, mm_to_px

from oracles import naive_gaussian_kernel, naive_sensor_value


def flat_image(v, head=(0.0, 0.0)):
    return EyeImage(np.full((480, 640), v), 20.0, GazeSample(0, 0), Shift2D(*head))


def test_kernel_matches_oracle(kernel):
    assert kernel.weights.shape == (121, 121)
    assert kernel.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(kernel.weights, naive_gaussian_kernel(121), rtol=0, atol=1e-15)
    assert not kernel.weights.flags.writeable


def test_kernel_shape_ratio(kernel):
    # sigma = 121 / 4 = 30.25 px; a 30 px step off-centre scales weight by exp(-900 / (2 sigma^2))
    w = kernel.weights
    expected = math.exp(-900 / (2 * 30.25 ** 2))
    assert expected == pytest.approx(0.6116, abs=1e-4)
    assert w[60, 90] / w[60, 60] == pytest.approx(expected, rel=1e-12)
    assert w[60, 60] == w.max()


def test_even_kernel_rejected():
    with pytest.raises(ConfigError):
        receptive_kernel(120)


def test_window_side():
    assert window_side(121) == 121
    assert window_side(121 * 121, "area") == 121
    with pytest.raises(ConfigError):
        window_side(120 * 121, "area")


def test_layout():
    lay = ArrayLayout()
    c = lay.sensor_centers()
    assert c.shape == (3, 5, 2)
    assert tuple(c[1, 2]) == (320, 240)
    assert tuple(c[0, 0]) == (200, 180) and tuple(c[2, 4]) == (440, 300)
    assert lay.extent_px == (241, 361)
    with pytest.raises(ConfigError):
        ArrayLayout(window_side_px=120)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(-100, 100), st.integers(-100, 100))
def test_uniform_image_gives_uniform_output(v, dx, dy):
    img = flat_image(v)
    f = simulate_frame(img, ArrayLayout(), receptive_kernel(121), Shift2D(dx / 20, dy / 20, dx, dy))
    assert np.all(np.abs(f.values - v) <= 1e-9)


def test_against_naive_patch(kernel):
    img = render_eye(EyeModelParams(), GazeSample(5, -3), Shift2D(0.2, -0.1), rng=np.random.default_rng(1))
    lay = ArrayLayout()
    s = mm_to_px(Shift2D(1.3, -0.4), 20.0)
    ox, oy = crop_offset(img, s)
    vals = patch_weights(img.pixels, lay, kernel, (ox, oy))
    centres = lay.sensor_centers()
    for r in range(3):
        for c in range(5):
            cx, cy = centres[r, c]
            ref = naive_sensor_value(img.pixels, int(cx) + ox, int(cy) + oy, kernel.weights)
            assert vals[r, c] == pytest.approx(ref, abs=1e-12)


def test_shift_is_translation(kernel):
    """Sampling a shifted crop equals sampling an image translated the other way."""
    rng = np.random.default_rng(0)
    pix = rng.uniform(size=(480, 640))
    lay = ArrayLayout()
    a = patch_weights(pix, lay, kernel, (7, -3))
    moved = np.roll(np.roll(pix, -7, axis=1), 3, axis=0)
    b = patch_weights(moved, lay, kernel, (0, 0))
    assert np.allclose(a, b, atol=1e-12)


def test_head_compensation():
    img = flat_image(0.5, head=(0.5, -0.25))
    s = mm_to_px(Shift2D(1.0, 1.0), 20.0)
    assert crop_offset(img, s) == (30, 15)
    assert crop_offset(img, s, compensate_head=False) == (20, 20)


def test_boundary():
    img = flat_image(0.5)
    assert crop_offset(img, mm_to_px(Shift2D(5.0, -5.0), 20.0)) == (100, -100)
    with pytest.raises(BoundaryError):
        crop_offset(img, mm_to_px(Shift2D(5.1, 0.0), 20.0))
    with pytest.raises(BoundaryError):
        crop_offset(flat_image(0.5, head=(0.5, 0)), mm_to_px(Shift2D(4.8, 0.0), 20.0))


def test_unquantized_shift_rejected():
    with pytest.raises(ValueError):
        crop_offset(flat_image(0.5), Shift2D(1.0, 0.0))


def test_frame_dump(tmp_path, kernel):
    img = flat_image(0.25)
    f = simulate_frame(img, ArrayLayout(), kernel, mm_to_px(Shift2D(1.2, 0.0), 20.0))
    write_frames([f], tmp_path / "f.csv")
    head, row = (tmp_path / "f.csv").read_text().splitlines()
    assert head.split(",") == ["subject", "x_deg", "y_deg", "dx_mm", "dy_mm", *sensor_names(), "bin"]
    assert row.endswith(",B2")
