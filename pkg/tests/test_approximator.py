import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairpolicy.approximator import (
    ParamBundle,
    adam_step,
    bundle_from_dict,
    bundle_to_dict,
    fit_logistic,
    load_bundles,
    mlp_apply,
    mlp_backward,
    mlp_forward,
    mlp_init,
    save_bundles,
    sigmoid,
    xavier_bound,
)
from fairpolicy.errors import ConfigurationError, NumericalError, ShapeError


def test_xavier_bound_hand_value():
    assert xavier_bound(2, 4) == pytest.approx(1.0)


def test_init_biases_zero_and_weights_in_bound():
    b = mlp_init([4, 3], 2, 5, seed=7)
    for W, bias in b.layers:
        assert np.all(bias == 0)
        lim = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        assert np.all(np.abs(W) <= lim)
    assert [W.shape for W, _ in b.layers] == [(4, 2), (3, 4), (5, 3)]


def test_init_is_deterministic():
    a, b = mlp_init([8], 3, 2, seed=11), mlp_init([8], 3, 2, seed=11)
    assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params))
    c = mlp_init([8], 3, 2, seed=12)
    assert not np.array_equal(a.params[0], c.params[0])


@pytest.mark.parametrize("dims", [(0, 2), (2, 0), (-1, 3)])
def test_init_rejects_bad_dimensions(dims):
    with pytest.raises(ConfigurationError):
        mlp_init([4], *dims, seed=0)
    with pytest.raises(ConfigurationError):
        mlp_init([0], 2, 2, seed=0)


def test_zero_weights_output_bias():
    b = mlp_init([3], 2, 2, seed=0)
    for p in b.params[::2]:
        p[:] = 0
    b.params[-1][:] = [0.25, -1.5]
    assert np.allclose(mlp_apply(b, np.array([3.0, -7.0])), [0.25, -1.5])


def test_single_linear_layer_hand_product():
    b = ParamBundle([np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros(2)])
    assert np.allclose(mlp_apply(b, np.array([1.0, 1.0])), [3.0, 7.0])


def test_rectifier_blocks_negative_preactivation():
    # hidden unit gets -1, which must not reach the output
    b = ParamBundle([np.array([[1.0]]), np.array([-2.0]), np.array([[5.0]]), np.array([0.5])])
    assert mlp_apply(b, np.array([1.0]))[0] == 0.5


def test_apply_shape_error():
    b = mlp_init([3], 2, 1, seed=0)
    with pytest.raises(ShapeError):
        mlp_apply(b, np.ones(3))


def test_bundle_rejects_unchained_layers():
    with pytest.raises(ShapeError):
        ParamBundle([np.ones((3, 2)), np.zeros(3), np.ones((1, 4)), np.zeros(1)])


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(0)
    b = mlp_init([5, 4], 3, 2, seed=1)
    for p in b.params[1::2]:
        p += rng.normal(0, 0.3, p.shape)
    x = rng.normal(size=(6, 3))
    c = rng.normal(size=(6, 2))

    def f():
        return float(np.sum(c * mlp_forward(b, x)[0]))

    out, cache = mlp_forward(b, x)
    grads, dx = mlp_backward(b, cache, c)
    h = 1e-3
    for P, G in zip(b.params, grads):
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            fp = f()
            P[idx] = old - h
            fm = f()
            P[idx] = old
            assert (fp - fm) / (2 * h) == pytest.approx(G[idx], rel=1e-6, abs=1e-8)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        assert (fp - fm) / (2 * h) == pytest.approx(dx[idx], rel=1e-6, abs=1e-8)


def _scalar_bundle(theta):
    return ParamBundle([np.array([[theta]]), np.array([0.0])])


def test_adam_first_step():
    b = adam_step(_scalar_bundle(1.0), [np.array([[1.0]]), np.array([0.0])], lr=0.01)
    assert b.params[0][0, 0] == pytest.approx(1.0 - 0.01 * 1.0 / (1.0 + 1e-8), abs=1e-15)
    assert b.step == 1


def test_adam_zero_gradient_is_noop():
    b0 = mlp_init([3], 2, 1, seed=0)
    b1 = adam_step(b0, b0.zeros_like(), lr=0.1)
    assert all(np.array_equal(p, q) for p, q in zip(b0.params, b1.params))
    assert all(np.all(m == 0) for m in b1.m) and all(np.all(v == 0) for v in b1.v)
    assert b1.step == 1


def test_adam_two_steps_hand_recursion():
    # Oracle: the Adam recursion written out on a scalar, frozen before the build.
    b = _scalar_bundle(1.0)
    for g in (0.5, -1.0):
        b = adam_step(b, [np.array([[g]]), np.array([0.0])], lr=0.01)
    assert b.params[0][0, 0] == pytest.approx(0.9936610354240566, abs=1e-14)


def test_adam_rejects_non_finite():
    b = _scalar_bundle(1.0)
    with pytest.raises(NumericalError):
        adam_step(b, [np.array([[np.nan]]), np.array([0.0])], lr=0.01)
    with pytest.raises(ShapeError):
        adam_step(b, [np.array([1.0]), np.array([0.0])], lr=0.01)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4), st.integers(0, 10_000))
def test_adam_state_mirrors_parameters(gs, seed):
    b = mlp_init([3], 2, 1, seed=seed)
    for g in gs:
        b = adam_step(b, [np.full_like(p, g) for p in b.params], lr=1e-3)
    assert b.step == len(gs)
    for p, m, v in zip(b.params, b.m, b.v):
        assert p.shape == m.shape == v.shape
        assert np.all(np.isfinite(p))


def test_snapshot_round_trip(tmp_path):
    b = adam_step(mlp_init([4], 3, 2, seed=5), mlp_init([4], 3, 2, seed=6).params, lr=0.1)
    d = bundle_to_dict(b)
    json.dumps(d)
    b2 = bundle_from_dict(d)
    assert b2.step == b.step
    assert all(np.array_equal(p, q) for p, q in zip(b.params, b2.params))
    save_bundles(tmp_path / "snap.json", {"enc": b}, meta={"t": 3})
    loaded, meta = load_bundles(tmp_path / "snap.json")
    assert meta == {"t": 3}
    assert np.array_equal(loaded["enc"].params[0], b.params[0])


def test_sigmoid_stable_at_extremes():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.allclose(out, [0.0, 0.5, 1.0]) and np.all(np.isfinite(out))


def test_fit_logistic_recovers_separating_direction():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(500, 2))
    y = (X[:, 0] - 0.5 * X[:, 1] > 0).astype(float)
    bundle, losses = fit_logistic(X, y, steps=300, lr=0.1)
    assert losses[-1] < losses[0]
    acc = np.mean((mlp_apply(bundle, X)[:, 0] > 0) == (y == 1))
    assert acc > 0.97
