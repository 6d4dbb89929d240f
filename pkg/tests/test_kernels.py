"""Kernel backends: direct examples, adjointness, backend agreement."""

import numpy as np
import pytest

from snapspec.netunmix import kernels

BACKENDS = kernels.available_backends()


@pytest.fixture(autouse=True)
def restore_backend():
    name = kernels.backend_name()
    yield
    kernels.set_backend(name)


def _adjoint_out_pad(h, w, kh, kw, sh, sw, ph, pw, ho, wo):
    return (h - ((ho - 1) * sh + kh - 2 * ph), w - ((wo - 1) * sw + kw - 2 * pw))


@pytest.mark.parametrize("backend", BACKENDS)
class TestConvExamples:
    def test_one_by_one_identity(self, backend):
        kernels.set_backend(backend)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 1, 5, 6))
        k = np.ones((1, 1, 1, 1))
        y = kernels.conv2d_forward(x, k, np.zeros(1))
        np.testing.assert_array_equal(y, x)

    def test_valid_conv_direct_sum(self, backend):
        kernels.set_backend(backend)
        x = np.array([[1.0, 2.0], [3.0, 4.0]])[None, None]
        k = np.array([[1.0, 0.0], [0.0, 1.0]])[None, None]
        y = kernels.conv2d_forward(x, k, None)
        assert y.shape == (1, 1, 1, 1)
        assert y[0, 0, 0, 0] == 5.0

    def test_convt_stride2_copies_kernel(self, backend):
        kernels.set_backend(backend)
        k = np.arange(1.0, 5.0).reshape(1, 1, 2, 2)
        x = np.full((1, 1, 1, 1), 3.0)
        y = kernels.convt2d_forward(x, k, None, (2, 2), (0, 0), (0, 0))
        np.testing.assert_array_equal(y[0, 0], 3.0 * k[0, 0])


@pytest.mark.parametrize("backend", BACKENDS)
class TestAdjoint:
    @pytest.mark.parametrize("cfg", [
        # (cin, cout, kh, kw, sh, sw, ph, pw, h, w)
        (1, 1, 3, 3, 1, 1, 1, 1, 6, 7),
        (3, 5, 3, 3, 2, 2, 1, 1, 8, 8),
        (2, 4, 1, 5, 1, 2, 0, 2, 5, 9),
        (4, 2, 3, 1, 2, 1, 1, 0, 7, 6),
    ])
    def test_inner_product_identity(self, backend, cfg):
        kernels.set_backend(backend)
        cin, cout, kh, kw, sh, sw, ph, pw, h, w = cfg
        rng = np.random.default_rng(hash(cfg) % 2 ** 32)
        z = rng.standard_normal((2, cin, h, w))
        k = rng.standard_normal((cout, cin, kh, kw))
        cz = kernels.conv2d_forward(z, k, None, (sh, sw), (ph, pw))
        x = rng.standard_normal(cz.shape)
        op = _adjoint_out_pad(h, w, kh, kw, sh, sw, ph, pw, cz.shape[2], cz.shape[3])
        zt = kernels.convt2d_forward(x, k, None, (sh, sw), (ph, pw), op)
        assert zt.shape == z.shape
        lhs = float((cz * x).sum())
        rhs = float((z * zt).sum())
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
class TestBackendAgreement:
    def _both(self, fn, *args, **kw):
        outs = []
        for backend in BACKENDS:
            kernels.set_backend(backend)
            outs.append(fn(*args, **kw))
        return outs

    def test_conv_forward_backward(self):
        rng = np.random.default_rng(1)
        for sh, sw, ph, pw in [(1, 1, 0, 0), (1, 1, 1, 1), (2, 2, 1, 1), (2, 1, 0, 2)]:
            x = rng.standard_normal((2, 3, 9, 8))
            k = rng.standard_normal((4, 3, 3, 3))
            b = rng.standard_normal(4)
            ya, yb = self._both(kernels.conv2d_forward, x, k, b, (sh, sw), (ph, pw))
            np.testing.assert_allclose(ya, yb, atol=1e-12)
            gy = rng.standard_normal(ya.shape)
            ga, gb_ = self._both(kernels.conv2d_backward, x, k, gy, (sh, sw), (ph, pw))
            for u, v in zip(ga, gb_):
                np.testing.assert_allclose(u, v, atol=1e-12)

    def test_convt_forward_backward(self):
        rng = np.random.default_rng(2)
        for sh, sw, ph, pw, oph, opw in [(1, 1, 0, 0, 0, 0), (2, 2, 1, 1, 1, 1), (2, 2, 0, 0, 1, 0)]:
            x = rng.standard_normal((2, 3, 5, 6))
            k = rng.standard_normal((3, 4, 3, 3))
            b = rng.standard_normal(4)
            ya, yb = self._both(
                kernels.convt2d_forward, x, k, b, (sh, sw), (ph, pw), (oph, opw)
            )
            np.testing.assert_allclose(ya, yb, atol=1e-12)
            gy = rng.standard_normal(ya.shape)
            ga, gb_ = self._both(
                kernels.convt2d_backward, x, k, gy, (sh, sw), (ph, pw), (oph, opw)
            )
            for u, v in zip(ga, gb_):
                np.testing.assert_allclose(u, v, atol=1e-12)

    def test_maxpool(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 4, 8, 10))
        (ya, ia), (yb, ib) = self._both(kernels.maxpool2x2_forward, x)
        np.testing.assert_array_equal(ya, yb)
        np.testing.assert_array_equal(ia, ib)
        gy = rng.standard_normal(ya.shape)
        ga, gb = self._both(kernels.maxpool2x2_backward, ia, gy, 8, 10)
        np.testing.assert_array_equal(ga, gb)

    def test_tie_breaking_matches(self):
        x = np.zeros((1, 1, 4, 4))  # every window ties at 0
        (ya, ia), (yb, ib) = self._both(kernels.maxpool2x2_forward, x)
        np.testing.assert_array_equal(ia, ib)
        assert (ia == 0).all()  # first element wins ties
