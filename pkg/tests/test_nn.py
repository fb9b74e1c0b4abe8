import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import central_difference, rel_error

from flowembed.nn import (AdamState, MLPSpec, adam_step, backward, forward, init_mlp, load_mlp, mlp_from_dict,
                          mlp_to_dict, save_mlp)


def test_init_shapes_and_bounds():
    mlp = init_mlp(MLPSpec((3, 2), seed=7))
    assert mlp.weights[0].shape == (2, 3) and mlp.biases[0].shape == (2,)
    assert np.all(np.abs(mlp.weights[0]) <= 1.0)  # sqrt(3 / 3)
    assert np.all(mlp.biases[0] == 0)
    wide = init_mlp(MLPSpec((48, 64, 2), seed=1))
    assert np.abs(wide.weights[0]).max() <= np.sqrt(3 / 48)
    assert np.abs(wide.weights[1]).max() <= np.sqrt(3 / 64)


def test_init_determinism():
    a, b = init_mlp(MLPSpec((4, 8, 2), seed=3)), init_mlp(MLPSpec((4, 8, 2), seed=3))
    for p, q in zip(a.params, b.params):
        assert np.array_equal(p, q)
    c = init_mlp(MLPSpec((4, 8, 2), seed=4))
    assert not np.array_equal(a.weights[0], c.weights[0])


@pytest.mark.parametrize("sizes", [(2,), (2, 0), tuple([2] * 12)])
def test_spec_rejects(sizes):
    with pytest.raises(ValueError):
        MLPSpec(sizes)


def test_forward_examples():
    mlp = init_mlp(MLPSpec((3, 5, 2)))
    for p in mlp.params:
        p[...] = 0.0
    assert np.all(forward(mlp, np.random.default_rng(0).normal(size=(4, 3)))[0] == 0)
    ident = init_mlp(MLPSpec((2, 2)))
    ident.weights[0][...] = np.eye(2)
    x = np.array([[1.5, -2.0], [0.0, 3.0]])
    assert np.array_equal(ident(x), x)


def test_leaky_relu_on_cache():
    mlp = init_mlp(MLPSpec((1, 1, 1)))
    mlp.weights[0][...] = 1.0
    mlp.weights[1][...] = 1.0
    out, cache = forward(mlp, np.array([[-1.0]]))
    assert cache.pre[0][0, 0] == -1.0
    assert out[0, 0] == pytest.approx(-0.01)
    deep = init_mlp(MLPSpec((3, 6, 6, 2), seed=2))
    _, cache = forward(deep, np.random.default_rng(1).normal(size=(10, 3)))
    for l in range(2):
        z, h = cache.pre[l], cache.inputs[l + 1]
        np.testing.assert_array_equal(h, np.where(z >= 0, z, 0.01 * z))


def test_forward_rejects_width():
    with pytest.raises(ValueError):
        forward(init_mlp(MLPSpec((3, 2))), np.zeros((2, 4)))


def test_backward_single_linear_layer():
    mlp = init_mlp(MLPSpec((3, 2), seed=5))
    x = np.array([[1.0, -2.0, 0.5]])
    g = np.array([[0.3, -1.2]])
    _, cache = forward(mlp, x)
    grads, gx = backward(mlp, cache, g)
    np.testing.assert_allclose(grads[0], g.T @ x)
    np.testing.assert_allclose(grads[1], g[0])
    np.testing.assert_allclose(gx, g @ mlp.weights[0])


def test_backward_zero_upstream():
    mlp = init_mlp(MLPSpec((3, 5, 2), seed=1))
    _, cache = forward(mlp, np.ones((4, 3)))
    grads, gx = backward(mlp, cache, np.zeros((4, 2)))
    assert all(np.all(g == 0) for g in grads) and np.all(gx == 0)


def test_backward_rejects_foreign_cache():
    a, b = init_mlp(MLPSpec((3, 2))), init_mlp(MLPSpec((3, 2)))
    _, cache = forward(a, np.ones((1, 3)))
    with pytest.raises(ValueError):
        backward(b, cache, np.ones((1, 2)))


def _check_gradients(sizes, seed):
    rng = np.random.default_rng(seed)
    mlp = init_mlp(MLPSpec(sizes, seed=seed))
    for b in mlp.biases:
        b[...] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(7, sizes[0]))
    Q = rng.normal(size=(sizes[-1], sizes[-1]))
    Q = Q @ Q.T
    target = rng.normal(size=(7, sizes[-1]))

    def loss_of_output(y):
        r = y - target
        return float(np.einsum("bi,ij,bj->", r, Q, r))

    out, cache = forward(mlp, x)
    grads, gx = backward(mlp, cache, 2 * (out - target) @ Q)
    for p, g in zip(mlp.params, grads):
        def f(value, p=p):
            saved = p.copy()
            p[...] = value
            try:
                return loss_of_output(forward(mlp, x)[0])
            finally:
                p[...] = saved
        assert rel_error(g, central_difference(f, p.copy())) < 1e-4
    fd_x = central_difference(lambda v: loss_of_output(forward(mlp, v)[0]), x)
    assert rel_error(gx, fd_x) < 1e-4


def test_gradient_three_five_two():
    _check_gradients((3, 5, 2), seed=0)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=2, max_size=4), st.integers(0, 1000))
def test_gradient_property(hidden, seed):
    sizes = (min(hidden[0], 6), *hidden[1:-1], 2) if len(hidden) > 2 else (min(hidden[0], 6), 2)
    _check_gradients(sizes, seed)


def test_gradient_largest_network():
    _check_gradients((6, 8, 8, 2), seed=11)


def test_adam_first_step():
    mlp = init_mlp(MLPSpec((3, 4, 2), seed=2))
    before = [p.copy() for p in mlp.params]
    grads = [np.random.default_rng(i).normal(size=p.shape) for i, p in enumerate(mlp.params)]
    state = AdamState.for_model(mlp)
    adam_step(mlp, grads, state)
    for p0, p1, g in zip(before, mlp.params, grads):
        delta = p1 - p0
        assert np.all(np.abs(delta) <= 1e-3 * (1 + 1e-12))
        np.testing.assert_allclose(delta, -1e-3 * np.sign(g), rtol=1e-5, atol=1e-9)
    assert state.step == 1


def test_adam_zero_gradient_fixed_point():
    mlp = init_mlp(MLPSpec((3, 4, 2), seed=2))
    before = [p.copy() for p in mlp.params]
    state = AdamState.for_model(mlp)
    for _ in range(5):
        adam_step(mlp, [np.zeros_like(p) for p in mlp.params], state)
    for p0, p1 in zip(before, mlp.params):
        assert np.array_equal(p0, p1)


def test_adam_determinism_and_nonfinite():
    def run():
        mlp = init_mlp(MLPSpec((2, 3, 2), seed=9))
        state = AdamState.for_model(mlp)
        rng = np.random.default_rng(0)
        for _ in range(10):
            adam_step(mlp, [rng.normal(size=p.shape) for p in mlp.params], state)
        return mlp
    a, b = run(), run()
    for p, q in zip(a.params, b.params):
        assert np.array_equal(p, q)
    bad = [np.zeros_like(p) for p in a.params]
    bad[0][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        adam_step(a, bad, AdamState.for_model(a))


def test_checkpoint_bit_exact(tmp_path):
    mlp = init_mlp(MLPSpec((4, 16, 16, 2), leaky_slope=0.02, seed=8))
    mlp.biases[1][...] = np.random.default_rng(0).normal(size=16) * 1e-7
    save_mlp(mlp, tmp_path / "m.json")
    back = load_mlp(tmp_path / "m.json")
    assert back.spec == mlp.spec
    for p, q in zip(mlp.params, back.params):
        assert np.array_equal(p, q)
    blob = mlp_to_dict(mlp)
    blob["version"] = 99
    with pytest.raises(ValueError):
        mlp_from_dict(blob)
