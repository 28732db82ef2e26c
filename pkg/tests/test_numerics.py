import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrseq.errors import ConfigError, DimensionError, NumericalError
from attrseq.numerics import (
    AdamState,
    Rng,
    adam_update,
    dense_backward,
    dense_forward,
    glorot_bound,
    grad_check,
    identity,
    init_glorot_uniform,
    init_orthogonal,
    matrix,
    matvec,
    relu,
    sgd_update,
    sigmoid,
    softmax,
    stack_backward,
    stack_forward,
    tanh_act,
    vector,
    zeros,
    zeros_like_params,
)

finite = st.floats(-50, 50, allow_nan=False)


# ------------------------------------------------------------ tensors


def test_matvec_identity_and_zero_cases():
    np.testing.assert_array_equal(matvec(identity(3), vector([1, 2, 3])), [1, 2, 3])
    np.testing.assert_array_equal(matvec(zeros(2, 3), vector([4, -1, 7])), [0, 0])


def test_matvec_hand_arithmetic():
    np.testing.assert_array_equal(matvec(matrix([[1, 2], [3, 4]]), vector([1, 1])), [3, 7])


def test_matvec_dimension_mismatch():
    with pytest.raises(DimensionError):
        matvec(zeros(2, 3), zeros(2))


def test_constructors_reject_bad_input():
    with pytest.raises(DimensionError):
        vector([[1.0]])
    with pytest.raises(NumericalError):
        vector([1.0, float("nan")])
    with pytest.raises(DimensionError):
        matrix([[1.0, 2.0]], rows=2)
    with pytest.raises(NumericalError):
        matrix([[float("inf")]])


def test_sigmoid_values():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert abs(sigmoid(np.array([700.0]))[0] - 1.0) < 1e-12
    # frozen from a 30-digit evaluation of 1 / (1 + exp(-x))
    np.testing.assert_allclose(sigmoid(np.array([-1.0, 1.0])), [0.268941421369995120, 0.731058578630004879],
                               rtol=0, atol=1e-15)


def test_relu_values():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    np.testing.assert_array_equal(relu(-np.arange(1.0, 5.0)), np.zeros(4))
    np.testing.assert_array_equal(relu(np.array([3.5])), [3.5])


def test_tanh_values():
    assert tanh_act(np.array([0.0]))[0] == 0.0
    assert abs(tanh_act(np.array([1.0]))[0] - 0.761594155955764888) < 1e-15


@given(st.lists(finite, min_size=1, max_size=8))
def test_tanh_is_odd(xs):
    x = np.array(xs)
    np.testing.assert_array_equal(tanh_act(-x), -tanh_act(x))


def test_softmax_cases():
    np.testing.assert_array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    np.testing.assert_allclose(softmax(np.full(4, 3.7)), [0.25] * 4, atol=1e-15)
    out = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(out)) and out[0] > 1 - 1e-12 and out[1] < 1e-12


@given(st.lists(finite, min_size=1, max_size=10), finite)
def test_softmax_is_a_distribution_and_shift_invariant(xs, c):
    x = np.array(xs)
    p = softmax(x)
    assert np.all(p >= 0) and abs(p.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(softmax(x + c), p, atol=1e-12)


def test_dense_stack_backward_matches_finite_differences():
    rng = Rng(3)
    params = {"l0.W": rng.normal(size=(4, 3)), "l0.b": rng.normal(size=4),
              "l1.W": rng.normal(size=(2, 4)), "l1.b": rng.normal(size=2)}
    x = rng.normal(size=3)
    target = rng.normal(size=2)

    def f(p):
        y, caches = stack_forward(p, "l", 2, x, ["tanh", "sigmoid"])
        grads = zeros_like_params(p)
        stack_backward(p, "l", caches, 2.0 * (y - target), grads)
        return float(((y - target) ** 2).sum()), grads

    assert grad_check(f, params) < 1e-8


def test_dense_forward_width_check():
    with pytest.raises(DimensionError):
        stack_forward({"l0.W": np.zeros((2, 3)), "l0.b": np.zeros(2)}, "l", 1, np.zeros(4), "relu")


def test_dense_backward_relu_blocks_negative_units():
    W = np.array([[1.0, 0.0], [-1.0, 0.0]])
    y, cache = dense_forward(W, np.zeros(2), np.array([1.0, 0.0]), "relu")
    dW, db, dx = dense_backward(W, cache, np.ones(2))
    np.testing.assert_array_equal(db, [1.0, 0.0])


# ------------------------------------------------------------ optimizers


def test_sgd_update_cases():
    p = {"w": np.array([1.0])}
    assert sgd_update(p, {"w": np.zeros(1)}, 0.1)["w"][0] == 1.0
    assert sgd_update(p, {"w": np.array([0.5])}, 0.0)["w"][0] == 1.0
    assert sgd_update(p, {"w": np.array([0.5])}, 0.1)["w"][0] == 0.95
    assert p["w"][0] == 1.0  # input untouched


def test_sgd_update_rejects_shape_mismatch_and_negative_rate():
    with pytest.raises(DimensionError):
        sgd_update({"w": np.zeros(2)}, {"w": np.zeros(3)}, 0.1)
    with pytest.raises(ConfigError):
        sgd_update({"w": np.zeros(2)}, {"w": np.zeros(2)}, -1.0)


def test_adam_zero_gradients_leave_params_unchanged():
    state, params = AdamState(), {"w": np.array([0.3, -2.0])}
    for _ in range(5):
        state, params = adam_update(state, params, {"w": np.zeros(2)})
    np.testing.assert_array_equal(params["w"], [0.3, -2.0])


def test_adam_first_step_is_rho_times_sign():
    g = np.array([3.0, -0.5])
    state, params = adam_update(AdamState(), {"w": np.zeros(2)}, {"w": g}, rho=0.01)
    # closed form: m_hat = g, v_hat = g^2, step = rho * g / sqrt(g^2 + eps)
    np.testing.assert_allclose(params["w"], -0.01 * g / np.sqrt(g * g + 1e-8), rtol=1e-15)
    np.testing.assert_allclose(params["w"], -0.01 * np.sign(g), rtol=1e-7)
    assert state.t == 1


def test_adam_moments_decay_after_gradients_stop():
    state, params = adam_update(AdamState(), {"w": np.zeros(1)}, {"w": np.ones(1)})
    m0, v0 = state.m["w"][0], state.v["w"][0]
    for _ in range(10):
        state, params = adam_update(state, params, {"w": np.zeros(1)})
    # 10-step trace: moments shrink geometrically by beta1 / beta2
    assert state.m["w"][0] == pytest.approx(m0 * 0.9**10, rel=1e-12)
    assert state.v["w"][0] == pytest.approx(v0 * 0.999**10, rel=1e-12)


def test_adam_rejects_bad_settings():
    with pytest.raises(ConfigError):
        adam_update(AdamState(), {"w": np.zeros(1)}, {"w": np.zeros(1)}, rho=0.0)
    with pytest.raises(ConfigError):
        adam_update(AdamState(), {"w": np.zeros(1)}, {"w": np.zeros(1)}, t=0)


# ------------------------------------------------------------ grad_check


def test_grad_check_quadratic_and_linear():
    p = {"a": np.array([1.0, -2.0, 0.5]), "b": np.array([[3.0]])}
    quad = lambda q: (sum(float((v * v).sum()) for v in q.values()), {k: 2 * v for k, v in q.items()})
    lin = lambda q: (float(q["a"].sum() + 2 * q["b"].sum()), {"a": np.ones(3), "b": np.full((1, 1), 2.0)})
    assert grad_check(quad, p) < 1e-8
    # near the origin the bumped values are exact, so only the division rounds
    assert grad_check(lin, {k: np.zeros_like(v) for k, v in p.items()}) < 1e-10
    # away from it the loss itself rounds at ~1e-16 * |loss|, amplified by 1 / (2 eps)
    assert grad_check(lin, p) < 1e-9


def test_grad_check_detects_wrong_gradient():
    p = {"a": np.array([1.0, 2.0])}
    assert grad_check(lambda q: (float((q["a"] ** 2).sum()), {"a": q["a"]}), p) > 0.1


def test_grad_check_errors():
    p = {"a": np.array([1.0])}
    with pytest.raises(ConfigError):
        grad_check(lambda q: (0.0, {"a": np.zeros(1)}), p, epsilon=0.1)
    with pytest.raises(NumericalError):
        grad_check(lambda q: (float("nan"), {"a": np.zeros(1)}), p)


# ------------------------------------------------------------ init and rng


def test_glorot_bounds_respected():
    W = init_glorot_uniform(Rng(1), 40, 25)
    assert np.all(np.abs(W) <= glorot_bound(40, 25))
    assert glorot_bound(40, 25) == math.sqrt(6) / math.sqrt(65)
    assert init_glorot_uniform(Rng(1), 0, 0).shape == (0, 0)
    np.testing.assert_array_equal(W, init_glorot_uniform(Rng(1), 40, 25))


def test_orthogonal_init():
    assert abs(init_orthogonal(Rng(5), 1)[0, 0]) == 1.0
    Q = init_orthogonal(Rng(5), 4)
    assert np.max(np.abs(Q.T @ Q - np.eye(4))) < 1e-9
    np.testing.assert_array_equal(Q, init_orthogonal(Rng(5), 4))


def test_rng_children_are_deterministic_and_independent():
    a, b = Rng(11).child("x"), Rng(11).child("x")
    np.testing.assert_array_equal(a.random(5), b.random(5))
    assert not np.array_equal(Rng(11).child("x").random(5), Rng(11).child("y").random(5))
    assert not np.array_equal(Rng(11).random(5), Rng(12).random(5))
    with pytest.raises(ValueError):
        Rng(-1)


@settings(max_examples=20)
@given(st.integers(0, 2**64 - 1))
def test_rng_accepts_full_u64_range(seed):
    assert Rng(seed).integers(0, 10) in range(10)
