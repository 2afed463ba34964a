"""Tests for the reverse-mode tape: per-op gradients against central finite
differences, broadcasting reduction, graph traversal, and the flat-leaf
driver."""

import numpy as np
import pytest

from probeflow import NumericsError
from probeflow import autodiff as ad


def central_grad(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar f at flat x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi.flat[i] += eps
        lo.flat[i] -= eps
        g.flat[i] = (f(hi) - f(lo)) / (2 * eps)
    return g


def tape_grad(build, x):
    _, g = ad.value_and_grad(build, np.asarray(x, dtype=np.float64))
    return g


def check_op(build, numpy_f, x, rtol=1e-7, atol=1e-9):
    got = tape_grad(build, x)
    want = central_grad(numpy_f, x)
    np.testing.assert_allclose(got, want, rtol=rtol, atol=atol)


class TestElementwiseOps:
    def test_add_sub_mul_div(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0.5, 2.0, 6)

        def build(p):
            a, b = ad.take(p, 0, 3), ad.take(p, 3, 6)
            return ad.vsum(ad.div(ad.mul(ad.add(a, b), ad.sub(a, b)), b))

        def npf(p):
            a, b = p[:3], p[3:]
            return float(np.sum((a + b) * (a - b) / b))

        check_op(build, npf, x)

    def test_operator_sugar_matches_functions(self):
        x = np.array([1.5, -0.5, 2.0])

        def build(p):
            return ad.vsum((p + 2.0) * p - p / 4.0 + (-p) - (1.0 - p))

        def npf(p):
            return float(np.sum((p + 2.0) * p - p / 4.0 + (-p) - (1.0 - p)))

        check_op(build, npf, x)

    def test_tanh(self):
        x = np.linspace(-2, 2, 7)
        check_op(lambda p: ad.vsum(ad.tanh(p)),
                 lambda p: float(np.sum(np.tanh(p))), x)

    def test_square(self):
        x = np.array([-1.5, 0.25, 3.0])
        check_op(lambda p: ad.vsum(ad.square(p)),
                 lambda p: float(np.sum(p * p)), x)

    def test_relu_away_from_kink(self):
        x = np.array([-1.0, -0.3, 0.4, 2.0])  # no coordinate near 0
        check_op(lambda p: ad.vsum(ad.relu(p)),
                 lambda p: float(np.sum(np.maximum(p, 0.0))), x)

    def test_relu_subgradient_zero_at_kink(self):
        g = tape_grad(lambda p: ad.vsum(ad.relu(p)), np.array([0.0]))
        assert g[0] == 0.0

    def test_clamp01_passes_inside_blocks_outside(self):
        x = np.array([-0.5, 0.25, 0.75, 1.5])
        g = tape_grad(lambda p: ad.vsum(ad.square(ad.clamp01(p))), x)
        np.testing.assert_allclose(g, [0.0, 0.5, 1.5, 0.0], atol=1e-15)

    def test_clamp01_gradient_passes_at_boundaries(self):
        # The closed interval keeps the subgradient at exactly 0 and 1.
        g = tape_grad(lambda p: ad.vsum(ad.clamp01(p)), np.array([0.0, 1.0]))
        np.testing.assert_allclose(g, [1.0, 1.0], atol=0)

    def test_gate_is_detached_heaviside(self):
        p = ad.leaf(np.array([-1.0, 0.0, 2.0]))
        out = ad.gate(p)
        np.testing.assert_array_equal(out.value, [0.0, 0.0, 1.0])
        assert not out.needs  # constant: no gradient flows through it

    def test_div_by_negative(self):
        x = np.array([1.0, 2.0, -3.0])
        check_op(lambda p: ad.vsum(ad.div(1.0, p)),
                 lambda p: float(np.sum(1.0 / p)), x)


class TestBroadcasting:
    def test_row_broadcast(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(3 + 12)

        def build(p):
            row = ad.take(p, 0, 3)
            mat = ad.take(p, 3, 15, shape=(4, 3))
            return ad.vsum(ad.square(ad.add(mat, row)))

        def npf(p):
            row, mat = p[:3], p[3:].reshape(4, 3)
            return float(np.sum((mat + row) ** 2))

        check_op(build, npf, x)

    def test_scalar_broadcast(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(1 + 6)

        def build(p):
            s = ad.take(p, 0, 1)
            mat = ad.take(p, 1, 7, shape=(2, 3))
            return ad.vsum(ad.mul(s, mat))

        def npf(p):
            return float(p[0] * np.sum(p[1:]))

        check_op(build, npf, x)

    def test_column_broadcast(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(2 + 6)

        def build(p):
            col = ad.take(p, 0, 2, shape=(2, 1))
            mat = ad.take(p, 2, 8, shape=(2, 3))
            return ad.vsum(ad.mul(col, mat))

        def npf(p):
            col, mat = p[:2].reshape(2, 1), p[2:].reshape(2, 3)
            return float(np.sum(col * mat))

        check_op(build, npf, x)

    def test_unbroadcast_helper(self):
        g = np.ones((4, 3))
        assert ad._unbroadcast(g, (3,)).shape == (3,)
        np.testing.assert_array_equal(ad._unbroadcast(g, (3,)), [4.0, 4.0, 4.0])
        np.testing.assert_array_equal(ad._unbroadcast(g, (1, 3)), [[4.0, 4.0, 4.0]])
        np.testing.assert_array_equal(ad._unbroadcast(g, (4, 1)),
                                      [[3.0]] * 4)
        same = ad._unbroadcast(g, (4, 3))
        assert same is g


class TestStructuralOps:
    def test_matmul(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(6 + 8)

        def build(p):
            a = ad.take(p, 0, 6, shape=(2, 3))
            b = ad.take(p, 6, 14, shape=(4, 2))
            return ad.vsum(ad.matmul(b, a))

        def npf(p):
            a, b = p[:6].reshape(2, 3), p[6:].reshape(4, 2)
            return float(np.sum(b @ a))

        check_op(build, npf, x)

    def test_reshape_roundtrip(self):
        x = np.arange(6, dtype=np.float64)

        def build(p):
            m = ad.reshape(p, (2, 3))
            return ad.vsum(ad.square(ad.reshape(m, (6,))))

        check_op(build, lambda p: float(np.sum(p * p)), x)

    def test_take_scatters_gradient(self):
        x = np.arange(5, dtype=np.float64)
        g = tape_grad(lambda p: ad.vsum(ad.square(ad.take(p, 1, 3))), x)
        np.testing.assert_allclose(g, [0.0, 2.0, 4.0, 0.0, 0.0], atol=0)

    def test_concat_cols_splits_gradient(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(4 + 6)

        def build(p):
            a = ad.take(p, 0, 4, shape=(2, 2))
            b = ad.take(p, 4, 10, shape=(2, 3))
            cat = ad.concat_cols(a, b)
            w = ad.const(np.arange(1.0, 6.0))
            return ad.vsum(ad.mul(cat, w))

        def npf(p):
            cat = np.concatenate([p[:4].reshape(2, 2), p[4:].reshape(2, 3)], axis=1)
            return float(np.sum(cat * np.arange(1.0, 6.0)))

        check_op(build, npf, x)


class TestGraphTraversal:
    def test_diamond_accumulates_both_paths(self):
        # root = sum(a*a) + sum(a*3): both branches share the same leaf.
        def build(p):
            return ad.add(ad.vsum(ad.square(p)), ad.vsum(ad.mul(p, 3.0)))

        x = np.array([1.0, -2.0])
        g = tape_grad(build, x)
        np.testing.assert_allclose(g, 2 * x + 3.0, atol=0)

    def test_reused_node_many_times(self):
        def build(p):
            s = ad.vsum(p)
            total = s
            for _ in range(10):
                total = ad.add(total, s)
            return total

        g = tape_grad(build, np.array([0.5, 0.5]))
        np.testing.assert_allclose(g, [11.0, 11.0], atol=0)

    def test_deep_chain_iterative_traversal(self):
        # A 5000-op chain: the iterative topological sort must not blow the
        # recursion limit.
        def build(p):
            node = p
            for _ in range(5000):
                node = ad.add(node, 1.0)
            return ad.vsum(node)

        g = tape_grad(build, np.array([0.0]))
        assert g[0] == 1.0

    def test_constants_do_not_collect_gradients(self):
        c = ad.const(np.array([1.0, 2.0]))
        p = ad.leaf(np.array([3.0, 4.0]))
        out = ad.vsum(ad.mul(c, p))
        ad.backward(out)
        assert c.grad is None
        np.testing.assert_array_equal(p.grad, [1.0, 2.0])

    def test_backward_rejects_vector_root(self):
        p = ad.leaf(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            ad.backward(ad.square(p))


class TestValueAndGrad:
    def test_half_norm_squared(self):
        p = np.array([3.0, -1.0, 2.0])
        val, g = ad.value_and_grad(
            lambda root: ad.mul(0.5, ad.vsum(ad.square(root))), p)
        assert val == pytest.approx(0.5 * float(p @ p), rel=1e-15)
        np.testing.assert_allclose(g, p, atol=0)

    def test_input_not_mutated(self):
        p = np.array([1.0, 2.0])
        before = p.copy()
        ad.value_and_grad(lambda root: ad.vsum(ad.square(root)), p)
        np.testing.assert_array_equal(p, before)

    def test_nonfinite_value_raises_tagged(self):
        with np.errstate(divide="ignore"):
            with pytest.raises(NumericsError) as err:
                ad.value_and_grad(
                    lambda root: ad.vsum(ad.div(root, 0.0)), np.array([1.0]))
        assert err.value.tag == "objective"

    def test_unused_leaf_gives_zero_gradient(self):
        val, g = ad.value_and_grad(lambda root: ad.vsum(ad.const(5.0)),
                                   np.array([1.0, 2.0]))
        assert val == 5.0
        np.testing.assert_array_equal(g, [0.0, 0.0])

    def test_composite_mlp_like_graph(self):
        # One tanh layer + relu layer against finite differences.
        rng = np.random.default_rng(6)
        sizes = (2, 4, 4, 1)
        n = 2 * 4 + 4 + 4 * 4 + 4 + 4 * 1 + 1
        x = rng.standard_normal(n) * 0.7
        data = rng.standard_normal((5, 2))

        def forward(p_get, mat):
            k = 0
            w1 = p_get(k, k + 8, (2, 4)); k += 8
            b1 = p_get(k, k + 4, None); k += 4
            w2 = p_get(k, k + 16, (4, 4)); k += 16
            b2 = p_get(k, k + 4, None); k += 4
            w3 = p_get(k, k + 4, (4, 1)); k += 4
            b3 = p_get(k, k + 1, None)
            if isinstance(mat, ad.Var):
                h = ad.tanh(ad.add(ad.matmul(mat, w1), b1))
                h = ad.relu(ad.add(ad.matmul(h, w2), b2))
                return ad.vsum(ad.square(ad.add(ad.matmul(h, w3), b3)))
            h = np.tanh(mat @ w1 + b1)
            h = np.maximum(h @ w2 + b2, 0.0)
            return float(np.sum((h @ w3 + b3) ** 2))

        def build(root):
            return forward(lambda a, b, s: ad.take(root, a, b, shape=s),
                           ad.const(data))

        def npf(p):
            return forward(lambda a, b, s: p[a:b].reshape(s) if s else p[a:b],
                           data)

        check_op(build, npf, x, rtol=1e-6, atol=1e-8)
