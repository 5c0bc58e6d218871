import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psogsim.errors import TrainingDivergedError
from psogsim.nn import (AdamState, _as_batch, _forward, Architecture, NetworkParams, adam_step, backward, forward,
                        init_params, load_checkpoint, loss, parameter_count, save_checkpoint)

from oracles import finite_difference_grad, kink_free_draw, naive_forward


def test_parameter_budget():
    assert parameter_count() == 2710
    sizes = {n: int(np.prod(s)) for n, s in Architecture().layer_shapes()}
    assert sizes["conv1_w"] + sizes["conv1_b"] == 40
    assert sizes["conv2_w"] + sizes["conv2_b"] == 148
    assert sizes["fc1_w"] + sizes["fc1_b"] == 1220
    assert sizes["head_w"] + sizes["head_b"] == 42


def test_init():
    a, b, c = init_params(1), init_params(1), init_params(2)
    assert np.array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, c.flat)
    assert np.all(np.isfinite(a.flat))
    assert np.all(a["conv1_w"] ** 2 <= 6 / 9 + 1e-12)
    assert np.all(np.abs(a["fc1_w"]) <= np.sqrt(6 / 60))
    assert not np.any(a["fc2_b"])


def test_zero_params_zero_output():
    p = NetworkParams()
    assert np.array_equal(forward(p, np.ones((4, 3, 5))), np.zeros((4, 2)))


def test_forward_matches_oracle():
    rng = np.random.default_rng(0)
    p = init_params(3)
    p.flat[:] += rng.normal(0, 0.05, size=len(p.flat))  # non-zero biases too
    X = rng.normal(size=(20, 3, 5))
    fast = forward(p, X)
    for i in range(len(X)):
        assert np.max(np.abs(fast[i] - naive_forward(p, X[i]))) <= 1e-10


def test_batch_equals_singles():
    rng = np.random.default_rng(1)
    p = init_params(4)
    X = rng.normal(size=(7, 3, 5))
    batch = forward(p, X)
    singles = np.vstack([forward(p, x) for x in X])
    assert np.allclose(batch, singles, rtol=0, atol=1e-12)


def test_non_finite_input_rejected():
    X = np.zeros((2, 3, 5))
    X[1, 2, 2] = np.nan
    with pytest.raises(ValueError):
        forward(init_params(0), X)
    with pytest.raises(ValueError):
        forward(init_params(0), np.zeros((2, 5, 3)))


def test_loss_examples():
    assert loss([[3.0, 4.0]], [[0.0, 0.0]]) == 12.5
    assert loss([[1.0, 2.0]], [[1.0, 2.0]]) == 0.0
    with pytest.raises(ValueError):
        loss(np.zeros((0, 2)), np.zeros((0, 2)))


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=20))
def test_loss_quadratic(res):
    r = np.array(res)
    z = np.zeros_like(r)
    assert loss(2 * r, z) == pytest.approx(4 * loss(r, z), rel=1e-12, abs=1e-300)


def _fd_check(seed):
    p, X, Y = kink_free_draw(np.random.default_rng(seed), init_params,
                             lambda p, X: _forward(p, _as_batch(p, X))[2])
    _, g = backward(p, X, Y)
    num = finite_difference_grad(lambda: loss(forward(p, X), Y), p.flat, 1e-5)
    err = np.abs(g.flat - num)
    scale = np.maximum(np.abs(g.flat), np.abs(num))
    ok = (err <= 1e-4 * scale) | (err <= 1e-8)
    return ok, err, scale


def test_gradient_matches_finite_differences():
    ok, err, scale = _fd_check(123)
    assert ok.all(), f"{(~ok).sum()} entries off; worst {err[~ok].max() if (~ok).any() else 0}"


def test_zero_residual_zero_gradient():
    p = init_params(0)
    X = np.random.default_rng(0).normal(size=(5, 3, 5))
    value, g = backward(p, X, forward(p, X))
    assert value == 0.0
    assert not np.any(g.flat)


def test_duplicated_batch_same_gradient():
    rng = np.random.default_rng(2)
    p = init_params(5)
    X, Y = rng.normal(size=(4, 3, 5)), rng.normal(size=(4, 2))
    _, g1 = backward(p, X, Y)
    _, g2 = backward(p, np.concatenate([X, X]), np.concatenate([Y, Y]))
    assert np.allclose(g1.flat, g2.flat, rtol=1e-12, atol=1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_names_layer():
    p = init_params(0)
    p["head_w"][0, 0] = 1e308
    with pytest.raises(TrainingDivergedError, match="head_w|fc"):
        backward(p, np.ones((2, 3, 5)), np.zeros((2, 2)))


def test_adam_zero_gradient_no_change():
    p = init_params(0)
    st_ = AdamState.zeros(p)
    q = adam_step(p, NetworkParams(p.arch), st_, 0.01)
    assert np.array_equal(p.flat, q.flat)


def test_adam_first_step_magnitude():
    p = init_params(0)
    rng = np.random.default_rng(0)
    g = NetworkParams(p.arch, rng.choice([-1, 1], size=len(p.flat)) * rng.uniform(0.5, 2, size=len(p.flat)))
    q = adam_step(p, g, AdamState.zeros(p), 0.01, eps=1e-8)
    step = p.flat - q.flat
    assert np.allclose(step, 0.01 * np.sign(g.flat), rtol=1e-6)


def test_adam_deterministic():
    p = init_params(0)
    g = NetworkParams(p.arch, np.linspace(-1, 1, len(p.flat)))
    a, b = AdamState.zeros(p), AdamState.zeros(p)
    pa = pb = p
    for _ in range(3):
        pa, pb = adam_step(pa, g, a), adam_step(pb, g, b)
    assert np.array_equal(pa.flat, pb.flat)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_checkpoint_round_trip(seed, tmp_path_factory):
    p = init_params(seed)
    mean, std = np.arange(15.0), np.full(15, 0.5)
    path = tmp_path_factory.mktemp("ck") / "m.bin"
    save_checkpoint(path, p, mean, std, {"seed": seed})
    q, m2, s2, meta = load_checkpoint(path)
    assert q.arch == p.arch and np.array_equal(q.flat, p.flat)
    assert np.array_equal(m2, mean) and np.array_equal(s2, std)
    assert meta == {"seed": seed}


def test_checkpoint_header_and_errors(tmp_path):
    p = init_params(0)
    save_checkpoint(tmp_path / "a.bin", p)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:8] == b"PSOGCNN\x00"
    _, m, s, _ = load_checkpoint(tmp_path / "a.bin")
    assert m is None and s is None
    (tmp_path / "b.bin").write_bytes(b"garbage!" + raw[8:])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "b.bin")


def test_capacity_sanity():
    """A 50-record noiseless set is fit below 1e-3 deg^2."""
    from psogsim.nn import TrainConfig
    from psogsim.trainer import fit
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 3, 5))
    Y = np.stack([X[:, 1, :].sum(axis=1) * 4, X[:, :, 2].sum(axis=1) * 3], axis=1)
    p, h = fit(init_params(0), X, Y, X, Y, TrainConfig(learning_rate=3e-3, batch_size=50,
                                                      max_epochs=2000, patience=None),
               np.random.default_rng(0))
    assert loss(forward(p, X), Y) < 1e-3
