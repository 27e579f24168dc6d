import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qtopt import autodiff as ad
from qtopt.autodiff import Adam, AdamState, Tensor, adam_step, gradcheck
from qtopt.errors import InvalidInputError, InvalidStateError, ShapeError

R = np.random.default_rng(99)


def weighted(fn, out_shape, seed=0):
    # fold any output into a scalar with fixed random weights
    w = np.random.default_rng(seed).normal(size=out_shape)
    return lambda *xs: ad.tsum(ad.mul(fn(*xs), w))


def away_from_zero(shape):
    x = R.normal(size=shape)
    return np.where(np.abs(x) < 0.1, 0.5, x)


UNARY = {
    "neg": (ad.neg, R.normal(size=(3, 4))),
    "exp": (ad.exp, R.normal(size=(3, 4))),
    "log": (ad.log, R.uniform(0.5, 2.0, (3, 4))),
    "sqrt": (ad.sqrt, R.uniform(0.5, 2.0, (3, 4))),
    "relu": (ad.relu, away_from_zero((3, 4))),
    "softplus": (ad.softplus, R.normal(size=(3, 4)) * 3),
    "abs": (ad.tabs, away_from_zero((3, 4))),
    "clamp_min": (lambda x: ad.clamp_min(x, 0.0), away_from_zero((3, 4))),
    "power": (lambda x: ad.power(x, 2.7), R.uniform(0.5, 2.0, (3, 4))),
    "sum_axis": (lambda x: ad.tsum(x, axis=1, keepdims=True), R.normal(size=(3, 4))),
    "mean_axes": (lambda x: ad.mean(x, axis=(0, 2)), R.normal(size=(2, 3, 4))),
    "reshape": (lambda x: ad.reshape(x, (4, 3)), R.normal(size=(3, 4))),
    "transpose": (lambda x: ad.transpose(x, (2, 0, 1)), R.normal(size=(2, 3, 4))),
    "broadcast_to": (lambda x: ad.broadcast_to(x, (5, 3, 4)), R.normal(size=(3, 1))),
    "getitem": (lambda x: x[1:, ::2], R.normal(size=(3, 4))),
    "getitem_repeat": (lambda x: ad.getitem(x, ([0, 0, 2], [1, 1, 3])), R.normal(size=(3, 4))),
    "gather": (lambda x: ad.gather(x, [3, 0, 0, 2], axis=-1), R.normal(size=(3, 4))),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_gradcheck(name):
    fn, x = UNARY[name]
    out_shape = fn(Tensor(x)).shape
    assert gradcheck(weighted(fn, out_shape), [x]) < 1e-6


BINARY = {
    "add_bcast": (ad.add, (3, 4), (4,)),
    "sub_bcast": (ad.sub, (3, 1), (1, 4)),
    "mul_bcast": (ad.mul, (2, 3, 4), (3, 1)),
    "div": (ad.div, (3, 4), None),
    "matmul": (ad.matmul, (3, 5), (5, 2)),
    "matmul_batched": (ad.matmul, (2, 3, 5), (5, 4)),
    "concat": (lambda a, b: ad.concat([a, b], axis=1), (3, 2), (3, 4)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_ops_gradcheck(name):
    fn, sa, sb = BINARY[name]
    a = R.normal(size=sa)
    b = R.uniform(0.5, 2.0, sa) if sb is None else R.normal(size=sb)
    out_shape = fn(Tensor(a), Tensor(b)).shape
    assert gradcheck(weighted(fn, out_shape), [a, b]) < 1e-6


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), ((2, 1), (0, 2))])
def test_conv2d_gradcheck(stride, padding):
    x, w, b = R.normal(size=(2, 3, 6, 5)), R.normal(size=(4, 3, 3, 3)), R.normal(size=4)
    fn = lambda x, w, b: ad.conv2d(x, w, b, stride=stride, padding=padding)
    out_shape = fn(Tensor(x), Tensor(w), Tensor(b)).shape
    assert gradcheck(weighted(fn, out_shape), [x, w, b]) < 1e-6


def test_conv1d_gradcheck():
    x, w, b = R.normal(size=(3, 2, 16)), R.normal(size=(2, 2, 4)), R.normal(size=2)
    fn = lambda x, w, b: ad.conv1d(x, w, b, stride=4)
    out_shape = fn(Tensor(x), Tensor(w), Tensor(b)).shape
    assert out_shape == (3, 2, 4)
    assert gradcheck(weighted(fn, out_shape), [x, w, b]) < 1e-6


def conv2d_loops(x, w, stride, pad):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for a in range(n):
        for k in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[a, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[a, k, i, j] = np.sum(patch * w[k])
    return out


def test_conv2d_forward_matches_loops():
    x, w = R.normal(size=(2, 3, 7, 6)), R.normal(size=(5, 3, 3, 2))
    for stride, pad in [(1, 0), (2, 1)]:
        np.testing.assert_allclose(ad.conv2d(x, w, stride=stride, padding=pad).data,
                                   conv2d_loops(x, w, stride, pad), atol=1e-12)


def test_soft_quantize_forward_is_hard_rounding():
    c = np.array([[12.0, -12.0, 7.5, -7.5, 0.2]])
    t = np.array([[8.0, 8.0, 5.0, 5.0, 1.0]])
    np.testing.assert_array_equal(ad.soft_quantize(c, t).data, [[2, -2, 2, -2, 0]])


def test_soft_quantize_ste_matches_frozen_offset_surrogate():
    # STE gradient == exact gradient of u + (round(u0) - u0) with the offset held fixed
    c = R.normal(size=(4, 8)) * 40
    t = R.uniform(2, 20, size=(4, 8))
    u0 = c / t
    offset = np.sign(u0) * np.floor(np.abs(u0) + 0.5) - u0
    w = R.normal(size=(4, 8))
    ste = lambda c, t: ad.tsum(ad.soft_quantize(c, t) * w)
    surrogate = lambda c, t: ad.tsum((c / t + offset) * w)
    assert gradcheck(surrogate, [c, t]) < 1e-6
    a = [Tensor(c, requires_grad=True), Tensor(t, requires_grad=True)]
    b = [Tensor(c, requires_grad=True), Tensor(t, requires_grad=True)]
    ste(*a).backward()
    surrogate(*b).backward()
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.grad, y.grad, rtol=1e-13)


def test_soft_quantize_cubic_gradcheck():
    c = R.normal(size=(3, 5)) * 30
    t = R.uniform(2, 20, size=(3, 5))
    fn = lambda c, t: ad.tsum(ad.soft_quantize(c, t, mode="cubic") * 1.3)
    assert gradcheck(fn, [c, t]) < 1e-6
    with pytest.raises(InvalidInputError):
        ad.soft_quantize(c, t, mode="nope")


def test_gradient_accumulates_over_shared_nodes():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = x * x + x * 3.0
    ad.tsum(y * y).backward()
    xv = x.data
    np.testing.assert_allclose(x.grad, 2 * (xv * xv + 3 * xv) * (2 * xv + 3))


def test_errors():
    with pytest.raises(InvalidInputError):
        (Tensor(np.ones(3), requires_grad=True) * 2).backward()
    with pytest.raises(ShapeError) as exc:
        ad.matmul(np.ones((2, 3)), np.ones((4, 2)))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)
    with pytest.raises(ShapeError):
        ad.add(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ShapeError):
        ad.conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-3, 3)),
       arrays(np.float64, (3,), elements=st.floats(-3, 3)))
def test_polynomial_gradients_property(a, b):
    # d/da sum((a*b + b)^2) computed by hand
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    ad.tsum(ad.power(ta * tb + tb, 2.0)).backward()
    inner = a * b + b
    np.testing.assert_allclose(ta.grad, 2 * inner * b, atol=1e-10)
    np.testing.assert_allclose(tb.grad, (2 * inner * (a + 1)).sum(axis=0), atol=1e-10)


def adam_reference(grad_fn, x0, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = np.array(x0, float), 0.0, 0.0
    for k in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** k)) / (np.sqrt(v / (1 - b2 ** k)) + eps)
    return x


def test_adam_matches_reference_trajectory():
    target = np.array([3.0, -1.0, 0.5])
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p], lr=0.05)
    for _ in range(40):
        ad.tsum(ad.power(p - target, 2.0) * np.array([1.0, 2.0, 0.5])).backward()
        opt.step()
    ref = adam_reference(lambda x: 2 * (x - target) * np.array([1.0, 2.0, 0.5]),
                         np.zeros(3), 40, 0.05)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12)


def test_adam_first_step_is_lr_times_sign():
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    p.grad = np.array([100.0, -0.001])
    Adam([p], lr=0.1).step()
    np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-5)
    assert p.grad is None


def test_adam_requires_gradients():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(InvalidStateError):
        Adam([p]).step()


def test_functional_adam_step():
    p = Tensor(np.array([2.0]), requires_grad=True)
    st_ = AdamState(lr=0.1)
    for _ in range(3):
        p.grad = 2 * p.data
        adam_step([p], st_)
    assert st_.step == 3
    np.testing.assert_allclose(p.data, adam_reference(lambda x: 2 * x, [2.0], 3, 0.1))
