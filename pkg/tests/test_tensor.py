"""Tensor core: pointwise ops, matmul, reverse-mode gradients."""

import numpy as np
import numpy.testing as npt
import pytest

from pbgdnet.tensor import (ShapeMismatchError, Tape, Tensor, add, add_n,
                            backward, elementwise, matmul, mul, scale, sub,
                            sum_all, zero_grads)

from oracles import fd_grad, matmul_loops, max_rel_err


class TestElementwise:
    def test_add(self):
        out = add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
        npt.assert_array_equal(out.data, [4.0, 6.0])

    def test_scale_by_zero(self):
        out = scale(Tensor([1.0, 2.0]), 0)
        npt.assert_array_equal(out.data, [0.0, 0.0])

    def test_mul_matches_pointwise_oracle(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        out = mul(Tensor(a), Tensor(b))
        expect = np.array([[a[i, j] * b[i, j] for j in range(3)] for i in range(3)])
        npt.assert_allclose(out.data, expect, rtol=0, atol=0)

    def test_sub_and_scalar_operands(self):
        npt.assert_array_equal(sub(Tensor([5.0, 1.0]), Tensor([2.0, 3.0])).data, [3.0, -2.0])
        npt.assert_array_equal(add(Tensor([1.0]), 2.5).data, [3.5])
        npt.assert_array_equal(mul(Tensor([2.0]), 3).data, [6.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_elementwise_dispatch(self):
        npt.assert_array_equal(elementwise("add", Tensor([1.0]), Tensor([2.0])).data, [3.0])
        with pytest.raises(ValueError):
            elementwise("pow", Tensor([1.0]), Tensor([2.0]))


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        npt.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_small_product(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        npt.assert_array_equal(out.data, [[11.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(11)
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        out = matmul(Tensor(a), Tensor(b))
        npt.assert_allclose(out.data, matmul_loops(a, b), atol=1e-12, rtol=0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestBackward:
    def test_square_gradient(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        backward(y, tape)
        npt.assert_array_equal(x.grad, [6.0])

    def test_requires_grad_propagates_through_sum(self):
        x = Tensor([-1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = sum_all(mul(x, x))
        backward(y, tape)
        npt.assert_allclose(x.grad, [-2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        with pytest.raises(ShapeMismatchError):
            backward(y, tape)

    def test_grads_accumulate_across_backward_calls(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        backward(y, tape)
        once = x.grad.copy()
        backward(y, tape)
        npt.assert_array_equal(x.grad, 2 * once)

    def test_zero_grads(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        backward(y, tape)
        zero_grads([x])
        npt.assert_array_equal(x.grad, [0.0])
        zero_grads([x])  # idempotent
        npt.assert_array_equal(x.grad, [0.0])

    def test_grad_after_zero_equals_single_pass(self):
        x = Tensor([1.5, -0.5], requires_grad=True)
        with Tape() as tape:
            y = sum_all(mul(x, x))
        backward(y, tape)
        backward(y, tape)
        zero_grads([x])
        backward(y, tape)
        x2 = Tensor([1.5, -0.5], requires_grad=True)
        with Tape() as tape2:
            y2 = sum_all(mul(x2, x2))
        backward(y2, tape2)
        npt.assert_array_equal(x.grad, x2.grad)

    def test_composite_graph_matches_finite_differences(self):
        """Analytic gradients of a mixed add/mul/matmul/sum graph."""
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        c = rng.normal(size=(3, 2))

        def forward() -> float:
            ta, tb, tc = Tensor(a), Tensor(b), Tensor(c)
            y = sum_all(mul(add(matmul(ta, tb), tc), tc))
            return y.item()

        for arr, name in ((a, "a"), (b, "b"), (c, "c")):
            ta = Tensor(a, requires_grad=True)
            tb = Tensor(b, requires_grad=True)
            tc = Tensor(c, requires_grad=True)
            with Tape() as tape:
                y = sum_all(mul(add(matmul(ta, tb), tc), tc))
            backward(y, tape)
            analytic = {"a": ta, "b": tb, "c": tc}[name].grad
            numeric = fd_grad(forward, arr)
            assert max_rel_err(analytic, numeric) <= 1e-5, name

    def test_shared_input_fans_in_gradient(self):
        x = Tensor([2.0], requires_grad=True)
        with Tape() as tape:
            y = add(mul(x, x), mul(x, 3.0))  # x^2 + 3x -> 2x + 3 = 7
        backward(y, tape)
        npt.assert_allclose(x.grad, [7.0])


class TestDeterminism:
    def test_bit_identical_runs(self):
        def run():
            rng = np.random.default_rng(99)
            x = Tensor(rng.normal(size=(5, 5)), requires_grad=True)
            w = Tensor(rng.normal(size=(5, 5)), requires_grad=True)
            with Tape() as tape:
                y = sum_all(mul(matmul(x, w), matmul(x, w)))
            backward(y, tape)
            return y.data.copy(), x.grad.copy(), w.grad.copy()

        y1, gx1, gw1 = run()
        y2, gx2, gw2 = run()
        assert np.array_equal(y1, y2)
        assert np.array_equal(gx1, gx2)
        assert np.array_equal(gw1, gw2)


def test_add_n_folds_left():
    ts = [Tensor([float(i)]) for i in range(4)]
    npt.assert_array_equal(add_n(ts).data, [6.0])
    with pytest.raises(ValueError):
        add_n([])


def test_tensor_invariants():
    t = Tensor(np.zeros((2, 3)), requires_grad=True, param_id="w")
    assert t.size == 6 and t.shape == (2, 3)
    assert t.grad is None
    t.accumulate_grad(np.ones((2, 3)))
    assert t.grad.shape == t.data.shape
