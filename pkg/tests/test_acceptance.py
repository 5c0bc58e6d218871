"""Acceptance criteria 1-11, each reported as one PASS/FAIL line.

The end-to-end criteria (6-11) share one full default-configuration run of every
study, which takes roughly 12 minutes on a single core.

Run alone with:  pytest tests/test_acceptance.py -v
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import conftest
from oracles import finite_difference_grad, kink_free_draw, naive_forward, normal_cdf
from psogsim.csvio import read_commented_csv
from psogsim.experiments import (ExperimentConfig, Workbench, run_experiments, run_shift_bin_study,
                                 run_shift_robustness)
from psogsim.eye import EyeImage, GazeSample
from psogsim.nn import _as_batch, _forward, backward, forward, init_params, loss, parameter_count
from psogsim.sensor import ArrayLayout, receptive_kernel, simulate_frame
from psogsim.shifts import Shift2D, containment_fraction, sample_gaussian_shift

pytestmark = pytest.mark.acceptance


def report(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


# -- numerical gates ------------------------------------------------------------

def _pre(p, X):
    return _forward(p, _as_batch(p, X))[2]


def test_c01_gradient_finite_differences():
    t0 = time.perf_counter()
    worst, bad = 0.0, 0
    for draw in range(20):
        p, X, Y = kink_free_draw(np.random.default_rng(1000 + draw), init_params, _pre)
        _, g = backward(p, X, Y)
        num = finite_difference_grad(lambda: loss(forward(p, X), Y), p.flat, 1e-5)
        err = np.abs(g.flat - num)
        scale = np.maximum(np.abs(g.flat), np.abs(num))
        ok = (err <= 1e-4 * scale) | (err <= 1e-8)
        bad += int((~ok).sum())
        rel = np.where(scale > 1e-8, err / np.maximum(scale, 1e-300), 0.0)
        worst = max(worst, float(rel.max()))
    dt = time.perf_counter() - t0
    report(1, bad == 0 and dt < 60,
           f"20 draws x 2710 entries, {bad} mismatches, worst rel err {worst:.2e}, {dt:.1f}s")


def test_c02_forward_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    p = init_params(11)
    p.flat[:] += rng.normal(0, 0.05, size=len(p.flat))
    X = rng.normal(size=(100, 3, 5))
    fast = forward(p, X)
    diff = max(float(np.max(np.abs(fast[i] - naive_forward(p, X[i])))) for i in range(100))
    dt = time.perf_counter() - t0
    report(2, diff <= 1e-10 and dt < 10, f"max |diff| {diff:.2e} over 100 frames, {dt:.2f}s")


_KERNEL = receptive_kernel(121)
_worst3 = [0.0]


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.integers(-100, 100), st.integers(-100, 100),
       st.integers(-20, 20), st.integers(-20, 20))
def _uniform_case(v, dx, dy, hx, hy):
    # admissible: total crop offset within the 100 px margin
    if abs(dx + hx) > 100 or abs(dy + hy) > 100:
        return
    img = EyeImage(np.full((480, 640), v), 20.0, GazeSample(0, 0), Shift2D(hx / 20, hy / 20))
    f = simulate_frame(img, ArrayLayout(), _KERNEL, Shift2D(dx / 20, dy / 20, dx, dy))
    _worst3[0] = max(_worst3[0], float(np.max(np.abs(f.values - v))))


def test_c03_kernel_normalization():
    _uniform_case()
    for dx, dy in [(100, 100), (-100, -100), (100, -100), (0, 0)]:
        img = EyeImage(np.full((480, 640), 0.37), 20.0, GazeSample(0, 0), Shift2D())
        f = simulate_frame(img, ArrayLayout(), _KERNEL, Shift2D(dx / 20, dy / 20, dx, dy))
        _worst3[0] = max(_worst3[0], float(np.max(np.abs(f.values - 0.37))))
    report(3, _worst3[0] <= 1e-9, f"max |output - v| {_worst3[0]:.2e} over random and extreme shifts")


def test_c04_shift_statistics():
    rng = np.random.default_rng(2024)
    shifts = [sample_gaussian_shift(1.0, rng) for _ in range(100_000)]
    per_axis, joint = containment_fraction(shifts, 2.0)
    d = np.array([(s.dx_mm, s.dy_mm) for s in shifts])
    std = d.std(axis=0)
    target = 2 * normal_cdf(2.0) - 1
    ok = abs(per_axis - target) <= 0.005 and np.all(np.abs(std - 1.0) <= 0.01)
    report(4, ok, f"per-axis |d|<=2mm {per_axis:.4f} (target {target:.4f}), joint {joint:.4f}, "
                  f"std {std[0]:.4f}/{std[1]:.4f}")


def test_c05_parameter_budget():
    n = parameter_count()
    report(5, n == 2710, f"{n} parameters")


# -- end-to-end studies on the default cohort ------------------------------------

@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    cfg = ExperimentConfig()
    out = tmp_path_factory.mktemp("acceptance")
    t0 = time.perf_counter()
    results = run_experiments(cfg, "all", out, jobs=1)
    t1 = time.perf_counter()
    bench = Workbench(cfg)
    rob = run_shift_robustness(cfg, None, bench)
    t2 = time.perf_counter()
    return {"cfg": cfg, "out": out, "results": results, "robustness": rob, "bench": bench,
            "sweep_seconds": t1 - t0, "robustness_seconds": t2 - t1}


def _median(summary, **match):
    rows = [r for r in summary if all(r[k] == v for k, v in match.items())]
    assert len(rows) == 1, match
    return rows[0]["median_seed_mean_deg"]


def test_c06_shift_robustness(full_run):
    s = full_run["robustness"].summary
    shifted = _median(s, train_shift="sigma")
    zero = _median(s, train_shift="zero")
    secs = full_run["robustness_seconds"]
    report(6, zero >= 2 * shifted and secs < 1800,
           f"shifted test set: sigma=1mm training {shifted:.3f} deg vs zero-shift training {zero:.3f} deg "
           f"(ratio {zero / shifted:.2f}), {secs / 60:.1f} min incl. cohort build")


def test_c07_data_scale_trend(full_run):
    cfg = full_run["cfg"]
    s = full_run["results"]["data-scale"].summary
    ok, parts = True, []
    for reg in cfg.regimens:
        curve = [_median(s, regimen=reg, fraction=f) for f in cfg.fractions]
        mono = all(b <= a + 0.05 for a, b in zip(curve, curve[1:]))
        ok &= mono and curve[-1] <= curve[0]
        parts.append(f"{reg} " + "/".join(f"{v:.2f}" for v in curve))
    report(7, ok, "median accuracy at 20..100%: " + "; ".join(parts))


def test_c08_shift_bin_ordering(full_run):
    s = full_run["results"]["shift-bins"].summary
    ok, parts = True, []
    for reg in full_run["cfg"].regimens:
        acc = [_median(s, regimen=reg, bin=f"B{k}") for k in range(1, 5)]
        deg = [a - acc[0] for a in acc]
        ok &= acc[0] < acc[1] <= acc[2] <= acc[3] and deg[3] > deg[1]
        parts.append(f"{reg} " + "/".join(f"{v:.2f}" for v in acc) + f" (B2 +{deg[1]:.2f}, B4 +{deg[3]:.2f})")
    report(8, ok, "median B1..B4: " + "; ".join(parts))


def test_c09_epoch_pattern(full_run):
    cfg = full_run["cfg"]
    s = full_run["results"]["epoch-curves"].summary
    epochs = [e for e in cfg.epoch_grid if e > 0]
    first, last = epochs[0], epochs[-1]
    fs1, ft1 = _median(s, regimen="FS", epoch=first), _median(s, regimen="FT", epoch=first)
    fsN, ftN = _median(s, regimen="FS", epoch=last), _median(s, regimen="FT", epoch=last)
    report(9, ft1 < fs1 and fsN <= ftN,
           f"epoch {first}: FT {ft1:.3f} < FS {fs1:.3f} is {ft1 < fs1}; "
           f"epoch {last}: FS {fsN:.3f} <= FT {ftN:.3f} is {fsN <= ftN}")


def test_c10_determinism(full_run, tmp_path):
    cfg = full_run["cfg"]
    first = full_run["out"]
    again = tmp_path / "rerun"
    run_shift_bin_study(cfg, again, Workbench(cfg, jobs=2))
    names = ["shift_bins.csv", "shift_bins_summary.csv"]
    same = all((first / n).read_bytes() == (again / n).read_bytes() for n in names)
    report(10, same, f"default-config shift-bin study rerun with 2 workers: {names} byte-identical={same}")


def test_c11_leakage(full_run):
    cfg = full_run["cfg"]
    meta, rows = read_commented_csv(full_run["out"] / "leakage_pools.csv")
    leaks = [r for r in rows if r["target_subject"] in r["pool_subjects"].split(";")]
    expected = {e: len(cfg.seeds) * len(cfg.targets) for e in ("data-scale", "shift-bins", "extended-range",
                                                               "epoch-curves")}
    counts = {e: sum(r["experiment"] == e for r in rows) for e in expected}
    complete = all(len(r["pool_subjects"].split(";")) == cfg.cohort.n_subjects - 1 for r in rows)
    ok = not leaks and counts == expected and complete
    report(11, ok, f"{len(rows)} FT pre-training pools scanned, {len(leaks)} contain their target; "
                   f"every pool holds the other {cfg.cohort.n_subjects - 1} subjects: {complete}")
