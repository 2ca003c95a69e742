from __future__ import annotations

import numpy as np
import pytest

from pcgain.errors import DivergenceError
from pcgain.nn import (
    IDENTITY,
    RELU,
    SIGMOID,
    SOFTMAX,
    TANH,
    AdamState,
    Layer,
    NetParams,
    adam_step,
    backward,
    forward,
    grad_check,
    mlp,
)


def single(weight, bias, act):
    return NetParams([Layer(np.asarray(weight, float), np.asarray(bias, float), act)])


def sq_loss(target):
    def loss(out):
        return float(((out - target) ** 2).sum()), 2.0 * (out - target)

    return loss


def test_identity_layer():
    x = np.random.default_rng(0).random((4, 3))
    out, _ = forward(single(np.eye(3), np.zeros(3), IDENTITY), x)
    np.testing.assert_array_equal(out, x)


def test_sigmoid_zero_weights():
    out, _ = forward(single(np.zeros((2, 3)), np.zeros(2), SIGMOID), np.ones((5, 3)))
    np.testing.assert_array_equal(out, 0.5)


def test_softmax_zero_weights_is_uniform():
    out, _ = forward(single(np.zeros((4, 3)), np.zeros(4), SOFTMAX), np.ones((2, 3)))
    np.testing.assert_allclose(out, 0.25)


def test_softmax_stable_for_large_logits():
    out, _ = forward(single(np.array([[1000.0], [0.0]]), np.zeros(2), SOFTMAX), np.ones((1, 1)))
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out.sum(axis=1), 1.0)


def test_forward_rejects_nonfinite_and_wrong_width():
    net = single(np.eye(2), np.zeros(2), IDENTITY)
    with pytest.raises(DivergenceError):
        forward(net, np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        forward(net, np.ones((1, 3)))


def test_netparams_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        NetParams([Layer(np.zeros((2, 3)), np.zeros(2), RELU), Layer(np.zeros((1, 3)), np.zeros(1), SIGMOID)])


def test_zero_output_grad_gives_zero_grads():
    net = mlp(3, (4,), 2, RELU, SIGMOID, np.random.default_rng(0))
    out, cache = forward(net, np.random.default_rng(1).random((5, 3)))
    grads, gin = backward(net, cache, np.zeros_like(out))
    assert all(not dw.any() and not db.any() for dw, db in grads)
    assert not gin.any()


def test_linear_squared_error_closed_form():
    rng = np.random.default_rng(2)
    w, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    x, y = rng.normal(size=(1, 3)), rng.normal(size=(1, 2))
    net = single(w, b, IDENTITY)
    out, cache = forward(net, x)
    (dw, db), = backward(net, cache, 2.0 * (out - y))[0]
    resid = x @ w.T + b - y
    np.testing.assert_allclose(dw, 2.0 * resid.T @ x)
    np.testing.assert_allclose(db, 2.0 * resid[0])


def test_xavier_init_bounds_and_zero_bias():
    net = mlp(10, (20,), 5, RELU, SIGMOID, np.random.default_rng(0))
    limit = np.sqrt(6.0 / (10 + 20))
    assert np.abs(net.layers[0].weight).max() <= limit
    assert all(not l.bias.any() for l in net.layers)


def test_adam_first_step_is_sign_like():
    net = single(np.zeros((2, 2)), np.zeros(2), IDENTITY)
    grads = [(np.array([[3.0, -5.0], [0.2, -0.01]]), np.array([7.0, -2.0]))]
    state = AdamState.for_params(net)
    adam_step(state, net, grads, 1e-3)
    np.testing.assert_allclose(net.layers[0].weight, -1e-3 * np.sign(grads[0][0]), atol=1e-6)
    np.testing.assert_allclose(net.layers[0].bias, -1e-3 * np.sign(grads[0][1]), atol=1e-6)


def test_adam_zero_gradient_decays_moments():
    net = single(np.ones((1, 1)), np.ones(1), IDENTITY)
    state = AdamState.for_params(net)
    adam_step(state, net, [(np.array([[1.0]]), np.array([1.0]))], 1e-3)
    m_before, v_before = state.first_moment[0].copy(), state.second_moment[0].copy()
    adam_step(state, net, [(np.zeros((1, 1)), np.zeros(1))], 1e-3)
    np.testing.assert_allclose(state.first_moment[0], 0.9 * m_before)
    np.testing.assert_allclose(state.second_moment[0], 0.999 * v_before)


def test_adam_zero_gradient_from_fresh_state_is_noop():
    net = single(np.ones((1, 1)), np.ones(1), IDENTITY)
    state = AdamState.for_params(net)
    adam_step(state, net, [(np.zeros((1, 1)), np.zeros(1))], 1e-3)
    np.testing.assert_array_equal(net.layers[0].weight, 1.0)
    assert not state.first_moment[0].any() and not state.second_moment[0].any()


def test_adam_deterministic():
    def run():
        net = mlp(3, (4,), 2, TANH, SIGMOID, np.random.default_rng(5))
        state = AdamState.for_params(net)
        g = [(np.full_like(l.weight, 0.3), np.full_like(l.bias, -0.1)) for l in net.layers]
        adam_step(state, net, g, 1e-2)
        return net.fingerprint()

    assert run() == run()


def test_adam_rejects_nonfinite_gradient():
    net = single(np.ones((1, 1)), np.ones(1), IDENTITY)
    with pytest.raises(DivergenceError):
        adam_step(AdamState.for_params(net), net, [(np.array([[np.inf]]), np.zeros(1))], 1e-3)
    np.testing.assert_array_equal(net.layers[0].weight, 1.0)


def test_gradcheck_linear_exact():
    rng = np.random.default_rng(0)
    net = single(rng.normal(size=(3, 4)), rng.normal(size=3), IDENTITY)
    assert grad_check(net, sq_loss(rng.normal(size=(6, 3))), rng.normal(size=(6, 4))) < 1e-9


@pytest.mark.parametrize("act", [RELU, SIGMOID, TANH])
def test_gradcheck_two_hidden_layers(act):
    rng = np.random.default_rng(1)
    net = mlp(5, (7, 6), 3, act, SIGMOID, rng)
    assert grad_check(net, sq_loss(rng.random((8, 3))), rng.random((8, 5)), seed=3) < 1e-4


def test_gradcheck_detects_corruption():
    rng = np.random.default_rng(1)
    net = mlp(5, (7, 6), 3, RELU, SIGMOID, rng)
    assert grad_check(net, sq_loss(rng.random((8, 3))), rng.random((8, 5)), corrupt=True) > 0.3


def test_gradcheck_leaves_parameters_untouched():
    rng = np.random.default_rng(4)
    net = mlp(3, (4,), 2, RELU, SOFTMAX, rng)
    before = net.fingerprint()
    grad_check(net, sq_loss(np.zeros((2, 2))), rng.random((2, 3)))
    assert net.fingerprint() == before
