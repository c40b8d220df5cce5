import math

import numpy as np
import pytest

from gaitgen import autodiff as ad
from conftest import central_difference, max_relative_error


def test_matmul_identity():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3))
    out = ad.matmul(ad.Tensor(np.eye(3)), ad.Tensor(M))
    assert np.array_equal(out.value, M)


def test_matmul_hand_product():
    out = ad.matmul(ad.Tensor([[1.0, 2.0], [3.0, 4.0]]), ad.Tensor([[1.0], [1.0]]))
    assert np.array_equal(out.value, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ad.ShapeError) as err:
        ad.matmul(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 5))
    B = rng.normal(size=(5, 3))

    def loss_np(a):
        return float(np.sum(a @ B))

    a = ad.Tensor(A.copy())
    loss = ad.tsum(ad.matmul(a, ad.Tensor(B.copy(), constant=True)))
    ad.backward(loss)
    fd = central_difference(loss_np, A.copy())
    assert max_relative_error(a.grad, fd) <= 1e-6


def test_elu_values():
    x = ad.Tensor([0.0, 1.0, -2.0])
    y = ad.elu(x)
    assert y.value[0] == 0.0
    assert y.value[1] == 1.0
    assert abs(y.value[2] - (math.exp(-2.0) - 1.0)) < 1e-15


def test_elu_gradient():
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(3, 4))

    def loss_np(v):
        y = np.where(v < 0, np.expm1(v), v)
        return float(np.sum(y * y))

    x = ad.Tensor(x0.copy())
    loss = ad.sum_sq(ad.elu(x))
    ad.backward(loss)
    assert max_relative_error(x.grad, central_difference(loss_np, x0.copy())) <= 1e-6


def test_softmax_uniform():
    y = ad.softmax(ad.Tensor([0.0, 0.0, 0.0, 0.0]))
    assert np.allclose(y.value, 0.25, atol=1e-15)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=7)
    a = ad.softmax(ad.Tensor(x)).value
    b = ad.softmax(ad.Tensor(x + 123.456)).value
    assert np.max(np.abs(a - b)) <= 1e-12


def test_softmax_closed_form_on_logs():
    y = ad.softmax(ad.Tensor([math.log(1.0), math.log(2.0), math.log(3.0)]))
    assert np.max(np.abs(y.value - np.array([1, 2, 3]) / 6.0)) < 1e-15


def test_softmax_sums_to_one_on_random_sweep():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        x = rng.normal(scale=rng.uniform(0.1, 50.0), size=rng.integers(2, 9))
        y = ad.softmax(ad.Tensor(x)).value
        assert abs(y.sum() - 1.0) <= 1e-12
        # strictly inside (0,1) in exact arithmetic; a dominant logit can
        # round the top coefficient to 1.0 at double precision
        assert np.all(y > 0.0) and np.all(y <= 1.0)
    # a single blending weight is exactly one
    assert ad.softmax(ad.Tensor([3.7])).value[0] == 1.0


def test_softmax_empty_raises():
    with pytest.raises(ad.ShapeError):
        ad.softmax(ad.Tensor(np.zeros(0)))


def test_softmax_gradient():
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=5)
    w = rng.normal(size=5)

    def loss_np(v):
        e = np.exp(v - v.max())
        return float(np.sum((e / e.sum()) * w))

    x = ad.Tensor(x0.copy())
    loss = ad.tsum(ad.mul(ad.softmax(x), ad.Tensor(w, constant=True)))
    ad.backward(loss)
    assert max_relative_error(x.grad, central_difference(loss_np, x0.copy())) <= 1e-6


def test_sum_sq_values_and_gradient():
    assert ad.sum_sq(ad.Tensor(np.zeros((3, 3)))).item() == 0.0
    x = ad.Tensor([3.0, 4.0])
    loss = ad.sum_sq(x)
    assert loss.item() == 25.0
    ad.backward(loss)
    assert np.array_equal(x.grad, [6.0, 8.0])


def test_backward_simple_leaf_gradients():
    w = ad.Tensor([1.0, -1.0])
    grads = ad.backward(ad.sum_sq(w))
    assert np.array_equal(w.grad, [2.0, -2.0])
    assert grads[w] is w.grad


def test_backward_unused_parameter_gets_zero_gradient():
    a = ad.Tensor([2.0])
    p = ad.Tensor([5.0, 7.0])
    loss = ad.sum_sq(a) + ad.tsum(p * 0.0)
    ad.backward(loss)
    assert np.array_equal(p.grad, [0.0, 0.0])


def test_backward_accumulates_shared_subexpression():
    # f = x.x + sum(x) has gradient 2x + 1
    x0 = np.array([0.5, -1.5, 2.0])
    x = ad.Tensor(x0.copy())
    loss = ad.sum_sq(x) + ad.tsum(x)
    ad.backward(loss)
    assert np.allclose(x.grad, 2.0 * x0 + 1.0, atol=1e-15)


def test_backward_zeroes_slots_between_calls():
    x = ad.Tensor([1.0, 2.0])
    loss = ad.sum_sq(x)
    ad.backward(loss)
    first = x.grad.copy()
    ad.backward(loss)
    assert np.array_equal(x.grad, first)


def test_backward_rejects_nonscalar_root():
    with pytest.raises(ad.ContractError):
        ad.backward(ad.Tensor(np.zeros((2, 2))) + 1.0)


def test_broadcast_bias_gradient_reduces_rows():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(5, 3))
    b0 = rng.normal(size=(1, 3))

    def loss_np(b):
        return float(np.sum((X + b) ** 2))

    b = ad.Tensor(b0.copy())
    loss = ad.sum_sq(ad.Tensor(X, constant=True) + b)
    ad.backward(loss)
    assert b.grad.shape == (1, 3)
    assert max_relative_error(b.grad, central_difference(loss_np, b0.copy())) <= 1e-6


def test_column_broadcast_gradient():
    rng = np.random.default_rng(7)
    c0 = rng.normal(size=(4, 1))
    M = rng.normal(size=(4, 6))

    def loss_np(c):
        return float(np.sum((c * M) ** 2))

    c = ad.Tensor(c0.copy())
    loss = ad.sum_sq(c * ad.Tensor(M, constant=True))
    ad.backward(loss)
    assert c.grad.shape == (4, 1)
    assert max_relative_error(c.grad, central_difference(loss_np, c0.copy())) <= 1e-6


def test_slice_and_concat_gradients():
    rng = np.random.default_rng(8)
    x0 = rng.normal(size=(3, 6))

    def loss_np(v):
        return float(np.sum(v[:, 1:3] ** 2) + np.sum(v[:, 4:6] ** 2))

    x = ad.Tensor(x0.copy())
    both = ad.concat_cols([ad.slice_cols(x, 1, 3), ad.slice_cols(x, 4, 6)])
    loss = ad.sum_sq(both)
    ad.backward(loss)
    assert max_relative_error(x.grad, central_difference(loss_np, x0.copy())) <= 1e-6
    assert np.array_equal(x.grad[:, 0], np.zeros(3))


def test_rows_matvec_value_and_gradient():
    rng = np.random.default_rng(9)
    M = rng.normal(size=(4, 2, 3))
    x0 = rng.normal(size=(4, 3))

    def loss_np(v):
        return float(np.sum(np.einsum("brc,bc->br", M, v) ** 2))

    x = ad.Tensor(x0.copy())
    out = ad.rows_matvec(M, x)
    assert np.allclose(out.value, np.einsum("brc,bc->br", M, x0), atol=1e-15)
    ad.backward(ad.sum_sq(out))
    assert max_relative_error(x.grad, central_difference(loss_np, x0.copy())) <= 1e-6


def test_constant_tensors_receive_no_gradient():
    x = ad.Tensor([1.0, 2.0], constant=True)
    w = ad.Tensor([3.0, 4.0])
    ad.backward(ad.sum_sq(x * w))
    assert x.grad is None
    assert w.grad is not None
