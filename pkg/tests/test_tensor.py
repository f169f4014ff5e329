import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odics import tensor as T
from odics.errors import ConfigurationError, DataError, NumericFailure
from odics.tensor import ParamSet


def naive_conv2d(x, kernel, bias):
    """Direct nested-loop same-padded cross-correlation."""
    n, c, h, w = x.shape
    o, _, k, _ = kernel.shape
    p = k // 2
    out = np.zeros((n, o, h, w))
    for b in range(n):
        for oc in range(o):
            for i in range(h):
                for j in range(w):
                    acc = bias[oc]
                    for ic in range(c):
                        for di in range(k):
                            for dj in range(k):
                                ii, jj = i + di - p, j + dj - p
                                if 0 <= ii < h and 0 <= jj < w:
                                    acc += x[b, ic, ii, jj] * kernel[oc, ic, di, dj]
                    out[b, oc, i, j] = acc
    return out


def test_conv_zero_input_gives_bias():
    out = T.conv2d(np.zeros((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.array([0.7]))
    assert np.all(out == 0.7)


def test_conv_identity_kernel():
    x = np.random.default_rng(0).random((2, 1, 4, 5))
    out = T.conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(out, x)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conv_matches_naive_loop(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 5, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    np.testing.assert_allclose(T.conv2d(x, k, b), naive_conv2d(x, k, b), rtol=0, atol=1e-12)


def test_conv_5x5_kernel_matches_naive_loop():
    rng = np.random.default_rng(9)
    x, k, b = rng.standard_normal((2, 3, 6, 4)), rng.standard_normal((2, 3, 5, 5)), rng.standard_normal(2)
    np.testing.assert_allclose(T.conv2d(x, k, b), naive_conv2d(x, k, b), atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(ConfigurationError):
        T.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ConfigurationError):
        T.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 2, 2, 2)), np.zeros(1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_conv_is_linear_in_input(seed, a, b):
    rng = np.random.default_rng(seed)
    x1, x2 = rng.standard_normal((2, 1, 2, 4, 4))
    k = rng.standard_normal((2, 2, 3, 3))
    zero = np.zeros(2)
    lhs = T.conv2d(a * x1 + b * x2, k, zero)
    rhs = a * T.conv2d(x1, k, zero) + b * T.conv2d(x2, k, zero)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def _conv_params(rng):
    return ParamSet(x=rng.standard_normal((2, 2, 5, 5)), k=rng.standard_normal((3, 2, 3, 3)), b=rng.standard_normal(3))


def test_conv_backward_finite_differences():
    rng = np.random.default_rng(3)
    p = _conv_params(rng)
    proj = rng.standard_normal((2, 5, 5, 3))

    def loss_fn(q):
        y, cols = T.conv2d_forward(q["x"].transpose(0, 2, 3, 1), q["k"], q["b"])
        dx, dk, db = T.conv2d_backward(proj, q["k"], cols)
        return float((y * proj).sum()), ParamSet(x=dx.transpose(0, 3, 1, 2), k=dk, b=db)

    assert T.finite_diff_check(loss_fn, p, num_coords=None) < 1e-6


def test_relu_values():
    np.testing.assert_array_equal(T.relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


def test_relu_all_negative():
    x = -np.arange(1.0, 6.0)
    assert np.all(T.relu(x) == 0)
    assert np.all(T.relu_backward(np.ones_like(x), x) == 0)


def test_relu_subgradient_at_zero_is_zero():
    assert T.relu_backward(np.array([1.0]), np.array([0.0]))[0] == 0.0


def test_relu_gradient_mask_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(200)
    x = x[np.abs(x) > 1e-3]  # keep away from the kink
    w = rng.standard_normal(x.size)

    def loss_fn(q):
        return float((T.relu(q["x"]) * w).sum()), ParamSet(x=T.relu_backward(w, q["x"]))

    np.testing.assert_array_equal(T.relu_backward(np.ones_like(x), x), (x > 0).astype(float))
    assert T.finite_diff_check(loss_fn, ParamSet(x=x), num_coords=None) < 1e-4


def test_uniform_logits_give_log_c():
    logits = np.zeros((2, 8, 3, 3))
    labels = np.random.default_rng(0).integers(0, 8, (2, 3, 3))
    loss, _ = T.masked_softmax_cross_entropy(logits, labels)
    assert abs(loss - math.log(8)) < 1e-12
    assert abs(loss - 2.0794) < 1e-4


def test_all_ignored_gives_zero():
    logits = np.random.default_rng(0).standard_normal((1, 4, 2, 2))
    loss, d = T.masked_softmax_cross_entropy(logits, np.full((1, 2, 2), 255))
    assert loss == 0.0 and not d.any()


def test_cross_entropy_gradient_with_ignore_mask():
    rng = np.random.default_rng(5)
    labels = rng.integers(0, 5, (2, 4, 4))
    labels[rng.random(labels.shape) < 0.3] = 255
    p = ParamSet(z=rng.standard_normal((2, 5, 4, 4)))

    def loss_fn(q):
        loss, d = T.masked_softmax_cross_entropy(q["z"], labels)
        return loss, ParamSet(z=d)

    assert T.finite_diff_check(loss_fn, p, num_coords=None) < 1e-4


def test_cross_entropy_invariant_to_ignored_logits():
    rng = np.random.default_rng(6)
    labels = rng.integers(0, 4, (1, 5, 5))
    labels[0, :2] = 255
    logits = rng.standard_normal((1, 4, 5, 5))
    other = logits.copy()
    other[:, :, :2] = rng.standard_normal((1, 4, 2, 5)) * 50
    a, da = T.masked_softmax_cross_entropy(logits, labels)
    b, db = T.masked_softmax_cross_entropy(other, labels)
    assert a == b
    np.testing.assert_array_equal(da, db)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(DataError):
        T.masked_softmax_cross_entropy(np.zeros((1, 3, 2, 2)), np.array([[[0, 1], [3, 255]]]))


def test_sgd_lr_zero_is_noop():
    p = ParamSet(a=np.array([1.0, 2.0]))
    T.sgd_step(p, ParamSet(a=np.array([5.0, 5.0])), 0.0)
    np.testing.assert_array_equal(p["a"], [1.0, 2.0])


def test_sgd_scalar_step():
    p = ParamSet(t=np.array(1.0))
    T.sgd_step(p, ParamSet(t=np.array(2.0)), 0.5)
    assert p["t"] == 0.0


def test_sgd_on_quadratic_closed_form():
    p = ParamSet(t=np.array(1.0))
    for k in range(1, 21):
        T.sgd_step(p, ParamSet(t=p["t"].copy()), 0.1)
        assert abs(float(p["t"]) - 0.9 ** k) < 1e-14


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2), st.integers(0, 1000))
def test_sgd_linear_in_lr_and_grad(lr, s, seed):
    rng = np.random.default_rng(seed)
    theta, g = rng.standard_normal(6), rng.standard_normal(6)
    p = ParamSet(w=theta.copy())
    T.sgd_step(p, ParamSet(w=s * g), lr)
    np.testing.assert_allclose(p["w"], theta - lr * s * g, atol=1e-12)


def test_sgd_rejects_non_finite():
    p = ParamSet(w=np.zeros(2))
    with pytest.raises(NumericFailure):
        T.sgd_step(p, ParamSet(w=np.array([0.0, np.nan])), 0.1)


def test_finite_diff_exact_for_linear_loss():
    rng = np.random.default_rng(7)
    c = rng.standard_normal(30)
    assert T.finite_diff_check(lambda q: (float(c @ q["w"]), ParamSet(w=c.copy())),
                               ParamSet(w=rng.standard_normal(30)), eps=1e-3, num_coords=None) < 1e-10


def test_finite_diff_detects_corrupted_gradient():
    rng = np.random.default_rng(8)
    c = rng.standard_normal(10) + 3.0

    def corrupted(q):
        g = c.copy()
        g[4] *= 2
        return float(c @ q["w"]), ParamSet(w=g)

    assert T.finite_diff_check(corrupted, ParamSet(w=np.zeros(10)), num_coords=None) > 0.3
