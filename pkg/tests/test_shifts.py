import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psogsim.errors import ConfigError
from psogsim.shifts import (Shift2D, ShiftBin, ShiftDistribution, bin_magnitude, bin_shift,
                            containment_fraction, draw_gaussian_shift, grid_shifts, mm_to_px,
                            read_shift_manifest, sample_gaussian_shift, sample_shifts,
                            write_shift_manifest)

from oracles import normal_cdf

TWO_SIGMA = 2 * normal_cdf(2.0) - 1  # 0.95449973610364...


def test_two_sigma_oracle_value():
    assert TWO_SIGMA == pytest.approx(0.9545, abs=5e-5)


def test_sigma_one_per_axis_containment():
    rng = np.random.default_rng(11)
    shifts = [sample_gaussian_shift(1.0, rng) for _ in range(100_000)]
    per_axis, joint = containment_fraction(shifts, 2.0)
    assert per_axis == pytest.approx(TWO_SIGMA, abs=0.005)
    assert joint == pytest.approx(TWO_SIGMA ** 2, abs=0.01)


def test_degenerate_sigma():
    s = sample_gaussian_shift(1e-9, np.random.default_rng(0))
    assert abs(s.dx_mm) < 1e-7 and abs(s.dy_mm) < 1e-7


def test_sigma_2p5_rejection_rate():
    rng = np.random.default_rng(5)
    n, rejected = 100_000, 0
    for _ in range(n):
        s, r = draw_gaussian_shift(2.5, rng)
        assert abs(s.dx_mm) <= 5 and abs(s.dy_mm) <= 5
        rejected += r
    admitted = n / (n + rejected)
    assert admitted == pytest.approx(TWO_SIGMA ** 2, abs=0.01)


def test_gaussian_moments():
    rng = np.random.default_rng(3)
    d = rng.normal(0, 1.0, size=(1_000_000, 2))  # same generator path, vectorized
    d = d[(np.abs(d) <= 5).all(axis=1)]
    n = len(d)
    assert np.all(np.abs(d.mean(axis=0)) < 4 / math.sqrt(n))
    assert np.all(np.abs(d.std(axis=0) - 1.0) < 0.01)


def test_grid_values():
    g = grid_shifts(2.0, 5)
    assert len(g) == 25
    assert sorted({s.dx_mm for s in g}) == [-2.0, -1.0, 0.0, 1.0, 2.0]
    corners = grid_shifts(2.0, 2)
    assert {(s.dx_mm, s.dy_mm) for s in corners} == {(-2, -2), (-2, 2), (2, -2), (2, 2)}


@pytest.mark.parametrize("n", range(2, 9))
def test_grid_contains_origin_iff_odd(n):
    has_zero = any(s.dx_mm == 0 and s.dy_mm == 0 for s in grid_shifts(1.5, n))
    assert has_zero == (n % 2 == 1)


def test_grid_errors():
    with pytest.raises(ConfigError):
        grid_shifts(5.5, 3)
    with pytest.raises(ConfigError):
        grid_shifts(2.0, 1)


@pytest.mark.parametrize("mm,px", [((2.0, -1.5), (40, -30)), ((0.024, 0.0), (0, 0)),
                                   ((0.025, 0.0), (1, 0)), ((-0.025, 0.0), (-1, 0))])
def test_mm_to_px(mm, px):
    s = mm_to_px(Shift2D(*mm), 20.0)
    assert (s.realized_dx_px, s.realized_dy_px) == px
    assert (s.dx_mm, s.dy_mm) == mm


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([10.0, 20.0, 37.5]))
def test_px_round_trip(dx, dy, scale):
    s = mm_to_px(Shift2D(dx, dy), scale)
    assert abs(s.realized_dx_px / scale - dx) <= 0.5 / scale + 1e-12
    assert abs(s.realized_dy_px / scale - dy) <= 0.5 / scale + 1e-12


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_mm_to_px_symmetric(dx, dy):
    a = mm_to_px(Shift2D(dx, dy), 20.0)
    b = mm_to_px(Shift2D(-dx, -dy), 20.0)
    assert (a.realized_dx_px, a.realized_dy_px) == (-b.realized_dx_px, -b.realized_dy_px)


def test_bins():
    assert bin_shift(Shift2D(0.6, 0.8)) == ShiftBin.B1
    assert bin_shift(Shift2D(1.2, 0.0)) == ShiftBin.B2
    assert bin_shift(Shift2D(1.7, 0.0)) == ShiftBin.B3
    assert bin_shift(Shift2D(2.0, 2.0)) == ShiftBin.B4
    assert bin_shift(Shift2D(1.2, 1.2), norm="max") == ShiftBin.B2


@given(st.floats(0, 10))
def test_binning_total_and_exclusive(m):
    b = bin_magnitude(m)
    edges = [(0, 1.0), (1.0, 1.5), (1.5, 2.0), (2.0, math.inf)]
    hits = [b_ for b_, (lo, hi) in zip(ShiftBin, edges) if (lo < m or (lo == 0 and m >= 0)) and m <= hi]
    assert hits == [b]


def test_distribution_validation():
    with pytest.raises(ConfigError):
        ShiftDistribution(sigma_mm=0)
    with pytest.raises(ConfigError):
        ShiftDistribution(kind="grid", range_mm=6)
    with pytest.raises(ConfigError):
        ShiftDistribution(kind="uniform")


def test_sample_shifts_grid_draws_from_grid():
    dist = ShiftDistribution(kind="grid", range_mm=2.0, n_per_axis=3)
    shifts, rejected = sample_shifts(dist, 50, np.random.default_rng(0))
    assert rejected == 0
    assert {(s.dx_mm, s.dy_mm) for s in shifts} <= {(x, y) for x in (-2, 0, 2) for y in (-2, 0, 2)}


def test_shift_manifest_round_trip(tmp_path):
    shifts = [mm_to_px(Shift2D(0.1234567891234, -2.5), 20.0), Shift2D(3.0, 0.0)]
    write_shift_manifest(shifts, tmp_path / "s.csv")
    assert read_shift_manifest(tmp_path / "s.csv") == shifts
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "dx_mm,dy_mm,dx_px,dy_px,bin"
