import numpy as np
import pytest
from scipy.signal import correlate2d

from bridgekit import autodiff as ad


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * h)
    return g


def check_against_fd(build, x, rtol=1e-6, atol=1e-8):
    """``build`` maps a leaf Tensor to a scalar Tensor."""
    leaf = ad.parameter(x.copy())
    out = build(leaf)
    (g,) = ad.grad(out, [leaf])
    fd = numeric_grad(lambda arr: build(ad.Tensor(arr)).item(), x.copy())
    np.testing.assert_allclose(g.data, fd, rtol=rtol, atol=atol)


class TestFirstOrder:
    def test_arithmetic_chain(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0.5, 2.0, (3, 4))
        c = rng.uniform(-1, 1, (3, 4))
        check_against_fd(lambda t: ((t * c + 2.0) / (t + 3.0)).sum(), x)

    def test_power_and_sqrt_log_exp(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0.5, 2.0, (5,))
        check_against_fd(lambda t: (ad.log(t) + ad.sqrt(t) + ad.exp(t * 0.3) + t ** 3).sum(), x)

    def test_nonlinearities(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-2, 2, (4, 3))
        check_against_fd(lambda t: (ad.tanh(t) + ad.sigmoid(t) + ad.softplus(t)
                                    + ad.silu(t)).sum(), x)

    def test_abs(self):
        x = np.array([[-1.5, 0.5, 2.0]])
        check_against_fd(lambda t: ad.absolute(t).sum(), x)

    def test_matmul_2d(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(3, 5))
        check_against_fd(lambda t: (t @ ad.Tensor(w)).sum(), x)
        leafw = ad.parameter(w.copy())
        out = (ad.Tensor(x) @ leafw).sum()
        (gw,) = ad.grad(out, [leafw])
        fd = numeric_grad(lambda arr: (x @ arr).sum(), w.copy())
        np.testing.assert_allclose(gw.data, fd, rtol=1e-6, atol=1e-9)

    def test_matmul_batched_broadcast(self):
        rng = np.random.default_rng(4)
        cols = rng.normal(size=(2, 6, 3))
        w = rng.normal(size=(3, 4))
        leafw = ad.parameter(w.copy())
        out = (ad.Tensor(cols) @ leafw).sum()
        (gw,) = ad.grad(out, [leafw])
        fd = numeric_grad(lambda arr: (cols @ arr).sum(), w.copy())
        np.testing.assert_allclose(gw.data, fd, rtol=1e-6, atol=1e-9)

    def test_broadcast_add_bias(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 3))
        b = rng.normal(size=(3,))
        leafb = ad.parameter(b.copy())
        out = ad.tanh(ad.Tensor(x) + leafb).sum()
        (gb,) = ad.grad(out, [leafb])
        fd = numeric_grad(lambda arr: np.tanh(x + arr).sum(), b.copy())
        np.testing.assert_allclose(gb.data, fd, rtol=1e-6, atol=1e-9)

    def test_reductions_and_shapes(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3, 4))
        check_against_fd(lambda t: (t.mean(axis=(1, 2)) ** 2).sum(), x)
        check_against_fd(lambda t: ad.transpose(t, (2, 0, 1)).reshape(4, 6).sum(axis=0).mean(), x)

    def test_concat_slice(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 3))
        y = rng.normal(size=(2, 5))

        def build(t):
            joined = ad.concat([t, ad.Tensor(y)], axis=1)
            return (ad.slice_axis(joined, 1, 1, 6) ** 2).sum()

        check_against_fd(build, x)


class TestConvBlocks:
    def test_unfold_fold_adjoint(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(2, 3, 5, 5))
        c = rng.normal(size=(2, 25, 27))
        lhs = np.sum(ad.unfold(ad.Tensor(x), 3, 1).data * c)
        rhs = np.sum(x * ad.fold(ad.Tensor(c), x.shape, 3, 1).data)
        assert abs(lhs - rhs) < 1e-10

    def test_conv2d_matches_scipy(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 3, 6, 6))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=(4,))
        out = ad.conv2d(ad.Tensor(x), ad.Tensor(w), ad.Tensor(b)).data
        for bi in range(2):
            for oc in range(4):
                ref = sum(correlate2d(x[bi, ic], w[oc, ic], mode="same") for ic in range(3))
                np.testing.assert_allclose(out[bi, oc], ref + b[oc], atol=1e-10)

    def test_conv2d_gradients(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(1, 2, 4, 4))
        w = rng.normal(size=(3, 2, 3, 3))
        leafw = ad.parameter(w.copy())
        out = (ad.conv2d(ad.Tensor(x), leafw) ** 2).sum()
        (gw,) = ad.grad(out, [leafw])

        def f(arr):
            return (ad.conv2d(ad.Tensor(x), ad.Tensor(arr)).data ** 2).sum()

        np.testing.assert_allclose(gw.data, numeric_grad(f, w.copy()), rtol=1e-5, atol=1e-8)
        check_against_fd(lambda t: (ad.conv2d(t, ad.Tensor(w)) ** 2).sum(), x.copy(), rtol=1e-5)

    def test_pooling_pair(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(1, 2, 4, 4))
        up = ad.upsample2(ad.Tensor(x)).data
        assert up.shape == (1, 2, 8, 8)
        np.testing.assert_array_equal(up[:, :, ::2, ::2], x)
        check_against_fd(lambda t: (ad.avgpool2(ad.upsample2(t)) ** 2).sum(), x.copy())


class TestSecondOrder:
    def test_grad_of_grad_scalar(self):
        # f(x) = x^3: f' = 3x^2, f'' = 6x
        x = ad.parameter(np.array(1.7))
        (g1,) = ad.grad(x ** 3, [x], create_graph=True)
        (g2,) = ad.grad(g1, [x])
        assert g1.item() == pytest.approx(3 * 1.7 ** 2, rel=1e-12)
        assert g2.item() == pytest.approx(6 * 1.7, rel=1e-12)

    def test_grad_norm_penalty_parameter_grad(self):
        """d/dw of ||d/dx f(x; w)||^2 against finite differences, the exact
        structure used by the discriminator gradient penalty."""
        rng = np.random.default_rng(12)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 1)) * 0.7

        def penalty(warr):
            xl = ad.parameter(x.copy())
            out = ad.tanh(xl @ ad.as_tensor(warr)).sum()
            (gx,) = ad.grad(out, [xl], create_graph=True)
            return (gx ** 2).sum()

        leafw = ad.parameter(w.copy())
        gp = penalty(leafw)
        (gw,) = ad.grad(gp, [leafw])
        fd = numeric_grad(lambda arr: penalty(ad.Tensor(arr)).item(), w.copy(), h=1e-5)
        np.testing.assert_allclose(gw.data, fd, rtol=1e-5, atol=1e-8)

    def test_second_order_through_conv(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(1, 1, 4, 4))
        w = rng.normal(size=(2, 1, 3, 3)) * 0.5

        def penalty(warr):
            xl = ad.parameter(x.copy())
            out = ad.sigmoid(ad.conv2d(xl, ad.as_tensor(warr))).sum()
            (gx,) = ad.grad(out, [xl], create_graph=True)
            return (gx ** 2).sum()

        leafw = ad.parameter(w.copy())
        (gw,) = ad.grad(penalty(leafw), [leafw])
        fd = numeric_grad(lambda arr: penalty(ad.Tensor(arr)).item(), w.copy(), h=1e-5)
        np.testing.assert_allclose(gw.data, fd, rtol=1e-4, atol=1e-8)


class TestGraphMechanics:
    def test_no_grad_blocks_recording(self):
        x = ad.parameter(np.ones(3))
        with ad.no_grad():
            y = (x * 2.0).sum()
        assert not y.requires_grad

    def test_unused_leaf_gets_zeros(self):
        x = ad.parameter(np.ones(3))
        z = ad.parameter(np.ones(2))
        (gz,) = ad.grad((x * 3.0).sum(), [z])
        np.testing.assert_array_equal(gz.data, np.zeros(2))

    def test_grad_requires_scalar(self):
        x = ad.parameter(np.ones(3))
        with pytest.raises(ValueError):
            ad.grad(x * 2.0, [x])

    def test_detach_cuts_graph(self):
        x = ad.parameter(np.array(2.0))
        y = (x ** 2).detach() * x
        (g,) = ad.grad(y, [x])
        assert g.item() == pytest.approx(4.0)  # d/dx (c * x), c = 4

    def test_repeated_backward_same_graph(self):
        x = ad.parameter(np.array(1.5))
        y = x ** 2
        (g1,) = ad.grad(y, [x])
        (g2,) = ad.grad(y, [x])
        assert g1.item() == g2.item() == pytest.approx(3.0)
