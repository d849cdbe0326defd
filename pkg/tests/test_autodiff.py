import numpy as np
import pytest

from bitextmine.autodiff import (
    Parameter,
    ShapeError,
    Tape,
    absolute,
    add,
    affine3,
    backward,
    blend,
    clamp,
    concat,
    hadamard,
    log,
    matmul,
    scalar_affine,
    sigmoid,
    sub,
    take_row,
    tanh,
)
from fdcheck import finite_diff, max_rel_err

TOL = 1e-4


def _grad_of(build, *param_arrays):
    """Analytic and FD gradients of a scalar-producing op graph."""
    params = [Parameter(f"p{i}", a) for i, a in enumerate(param_arrays)]

    def forward():
        tape = Tape()
        leaves = [tape.watch(q) for q in params]
        out = build(tape, *leaves)
        return tape, out

    tape, out = forward()
    analytic = backward(tape, out)
    numeric = finite_diff(lambda: float(forward()[1].data), params)
    return {q: analytic[q] for q in params}, numeric


class TestForwardValues:
    def test_sigmoid_zero(self):
        t = Tape()
        assert sigmoid(t.constant(0.0)).item() == 0.5

    def test_tanh_zero(self):
        t = Tape()
        assert tanh(t.constant(0.0)).item() == 0.0

    def test_hadamard(self):
        t = Tape()
        out = hadamard(t.constant([1.0, 2.0]), t.constant([3.0, 4.0]))
        np.testing.assert_array_equal(out.data, [3.0, 8.0])

    def test_concat(self):
        t = Tape()
        out = concat(t.constant([1.0]), t.constant([2.0, 3.0]))
        np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])

    def test_sigmoid_saturation_is_finite(self):
        t = Tape()
        out = sigmoid(t.constant([-800.0, 800.0]))
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, [0.0, 1.0], atol=1e-300)

    def test_scalar_affine(self):
        t = Tape()
        out = scalar_affine(t.constant([1.0, 2.0]), -1.0, 1.0)
        np.testing.assert_array_equal(out.data, [0.0, -1.0])


class TestSpotGradients:
    def test_sigmoid_grad_at_zero(self):
        q = Parameter("x", np.zeros(()))
        t = Tape()
        out = sigmoid(t.watch(q))
        g = backward(t, out)
        assert g[q] == pytest.approx(0.25, abs=1e-15)

    def test_square_grad(self):
        # d/dx (x*x) at 3 = 6
        q = Parameter("x", np.array(3.0))
        t = Tape()
        x = t.watch(q)
        g = backward(t, hadamard(x, x))
        assert g[q] == pytest.approx(6.0, abs=1e-12)

    def test_diamond_counts_each_path_once(self):
        # y = x + x must give dy/dx = 2, not 4 (each op replayed exactly once)
        q = Parameter("x", np.array(1.5))
        t = Tape()
        x = t.watch(q)
        g = backward(t, add(x, x))
        assert g[q] == pytest.approx(2.0, abs=0)


class TestPrimitiveGradients:
    """Every primitive against central finite differences on random values."""

    def test_matmul_mat_vec(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            W = rng.uniform(-3, 3, (4, 3))
            x = rng.uniform(-3, 3, 3)
            a, n = _grad_of(lambda t, w, v: matmul(t.constant(np.ones(4)), matmul(w, v)), W, x)
            assert max_rel_err(a, n) < TOL

    def test_matmul_vec_vec(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            u, v = rng.uniform(-3, 3, (2, 5))
            a, n = _grad_of(lambda t, x, y: matmul(x, y), u, v)
            assert max_rel_err(a, n) < TOL

    def test_matmul_mat_mat(self):
        rng = np.random.default_rng(2)
        A = rng.uniform(-3, 3, (2, 3))
        B = rng.uniform(-3, 3, (3, 2))

        def build(t, a_, b_):
            prod = matmul(a_, b_)  # (2,2)
            v = t.constant(np.ones(2))
            return matmul(v, matmul(prod, v))

        a, n = _grad_of(build, A, B)
        assert max_rel_err(a, n) < TOL

    def test_matmul_vec_mat(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-3, 3, 4)
        W = rng.uniform(-3, 3, (4, 2))
        a, n = _grad_of(lambda t, v, w: matmul(matmul(v, w), t.constant(np.ones(2))), x, W)
        assert max_rel_err(a, n) < TOL

    @pytest.mark.parametrize("op", [add, sub, hadamard])
    def test_binary_elementwise(self, op):
        rng = np.random.default_rng(4)
        x, y = rng.uniform(-3, 3, (2, 6))
        a, n = _grad_of(lambda t, u, v: matmul(op(u, v), t.constant(np.ones(6))), x, y)
        assert max_rel_err(a, n) < TOL

    @pytest.mark.parametrize("op", [tanh, sigmoid])
    def test_unary_smooth(self, op):
        rng = np.random.default_rng(5)
        x = rng.uniform(-3, 3, 7)
        a, n = _grad_of(lambda t, v: matmul(op(v), t.constant(np.ones(7))), x)
        assert max_rel_err(a, n) < TOL

    def test_absolute(self):
        # keep values away from the kink relative to the FD step
        rng = np.random.default_rng(6)
        x = rng.uniform(0.5, 3, 6) * rng.choice([-1.0, 1.0], 6)
        a, n = _grad_of(lambda t, v: matmul(absolute(v), t.constant(np.ones(6))), x)
        assert max_rel_err(a, n) < TOL

    def test_scalar_affine(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-3, 3, 5)
        a, n = _grad_of(
            lambda t, v: matmul(scalar_affine(v, -2.5, 0.75), t.constant(np.ones(5))), x
        )
        assert max_rel_err(a, n) < TOL

    def test_log(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(0.2, 3, 5)
        a, n = _grad_of(lambda t, v: matmul(log(v), t.constant(np.ones(5))), x)
        assert max_rel_err(a, n) < TOL

    def test_clamp_inside_and_outside(self):
        x = np.array([0.5, -2.0, 2.0, 0.1])  # clamp to [-1, 1]: inner coords pass gradient
        a, n = _grad_of(lambda t, v: matmul(clamp(v, -1.0, 1.0), t.constant(np.ones(4))), x)
        assert max_rel_err(a, n) < TOL
        q = list(a.keys())[0]
        np.testing.assert_array_equal(a[q], [1.0, 0.0, 0.0, 1.0])

    def test_concat(self):
        rng = np.random.default_rng(9)
        x, y = rng.uniform(-3, 3, (2, 4))
        a, n = _grad_of(lambda t, u, v: matmul(concat(u, v), t.constant(np.ones(8))), x, y)
        assert max_rel_err(a, n) < TOL

    def test_take_row(self):
        rng = np.random.default_rng(10)
        E = rng.uniform(-3, 3, (5, 3))

        def build(t, e):
            r0 = take_row(e, 1)
            r1 = take_row(e, 3)
            r2 = take_row(e, 1)  # repeated row accumulates
            return matmul(add(add(r0, r1), r2), t.constant(np.ones(3)))

        a, n = _grad_of(build, E)
        assert max_rel_err(a, n) < TOL
        q = list(a.keys())[0]
        assert np.all(a[q][0] == 0.0) and np.all(a[q][1] == 2.0)

    def test_affine3(self):
        rng = np.random.default_rng(11)
        W = rng.uniform(-2, 2, (3, 4))
        x = rng.uniform(-2, 2, 4)
        U = rng.uniform(-2, 2, (3, 3))
        h = rng.uniform(-2, 2, 3)
        b = rng.uniform(-2, 2, 3)
        a, n = _grad_of(
            lambda t, *ls: matmul(affine3(*ls), t.constant(np.ones(3))), W, x, U, h, b
        )
        assert max_rel_err(a, n) < TOL

    def test_blend(self):
        rng = np.random.default_rng(12)
        z, p, c = rng.uniform(-2, 2, (3, 5))
        a, n = _grad_of(lambda t, *ls: matmul(blend(*ls), t.constant(np.ones(5))), z, p, c)
        assert max_rel_err(a, n) < TOL


class TestBackwardContract:
    def test_unused_parameter_gets_exact_zeros(self):
        used = Parameter("used", np.array([1.0, 2.0]))
        unused = Parameter("unused", np.array([[3.0, 4.0]]))
        t = Tape()
        x = t.watch(used)
        t.watch(unused)
        g = backward(t, matmul(x, x))
        assert np.all(g[unused] == 0.0)
        assert g[unused].shape == unused.value.shape

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(13)
        W = Parameter("W", rng.uniform(-1, 1, (6, 6)))
        x = Parameter("x", rng.uniform(-1, 1, 6))
        t = Tape()
        out = matmul(sigmoid(matmul(t.watch(W), tanh(t.watch(x)))), t.constant(np.ones(6)))
        g1 = backward(t, out)
        g2 = backward(t, out)
        assert np.array_equal(g1[W], g2[W]) and np.array_equal(g1[x], g2[x])

    def test_non_scalar_loss_rejected(self):
        t = Tape()
        v = t.constant([1.0, 2.0])
        with pytest.raises(ValueError, match="scalar"):
            backward(t, v)

    def test_loss_from_other_tape_rejected(self):
        t1, t2 = Tape(), Tape()
        loss = sigmoid(t2.constant(0.0))
        with pytest.raises(ValueError, match="tape"):
            backward(t1, loss)

    def test_into_accumulates_across_tapes(self):
        q = Parameter("x", np.array(2.0))
        buffers = {q: np.zeros(())}
        for _ in range(3):
            t = Tape()
            x = t.watch(q)
            backward(t, hadamard(x, x), into=buffers)
        assert buffers[q] == pytest.approx(3 * 4.0)

    def test_returned_gradients_read_only(self):
        q = Parameter("x", np.array(1.0))
        t = Tape()
        g = backward(t, hadamard(t.watch(q), t.watch(q)))
        with pytest.raises(ValueError):
            g[q][...] = 0.0


class TestShapeErrors:
    def test_add_names_op_and_shapes(self):
        t = Tape()
        with pytest.raises(ShapeError, match=r"add.*\(3,\).*\(4,\)"):
            add(t.constant(np.ones(3)), t.constant(np.ones(4)))

    def test_matmul_mismatch(self):
        t = Tape()
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4,\)"):
            matmul(t.constant(np.ones((2, 3))), t.constant(np.ones(4)))

    def test_matmul_scalar_rejected(self):
        t = Tape()
        with pytest.raises(ShapeError):
            matmul(t.constant(1.0), t.constant(np.ones(3)))

    def test_concat_2d_rejected(self):
        t = Tape()
        with pytest.raises(ShapeError, match="concat"):
            concat(t.constant(np.ones((2, 2))))

    def test_take_row_out_of_range(self):
        t = Tape()
        with pytest.raises(IndexError):
            take_row(t.constant(np.ones((2, 3))), 5)

    def test_cross_tape_rejected(self):
        t1, t2 = Tape(), Tape()
        with pytest.raises(ValueError, match="tapes"):
            add(t1.constant(np.ones(2)), t2.constant(np.ones(2)))

    def test_log_nonpositive_rejected(self):
        t = Tape()
        with pytest.raises(ValueError, match="log"):
            log(t.constant([1.0, 0.0]))


class TestFiniteness:
    def test_kernel_ops_stay_finite_on_sane_inputs(self):
        rng = np.random.default_rng(14)
        t = Tape()
        x = t.constant(rng.uniform(-3, 3, 16))
        y = t.constant(rng.uniform(-3, 3, 16))
        outs = [
            add(x, y), sub(x, y), hadamard(x, y), absolute(x),
            tanh(x), sigmoid(x), scalar_affine(x, 2.0, -1.0),
            clamp(x, -1.0, 1.0), concat(x, y),
        ]
        for out in outs:
            assert np.all(np.isfinite(out.data))

    def test_watch_dedup(self):
        q = Parameter("x", np.ones(3))
        t = Tape()
        assert t.watch(q) is t.watch(q)
