"""Layer blocks: functional semantics and finite-difference gradients."""

import numpy as np
import pytest

from snapspec.netunmix.layers import (
    Conv2d,
    ConvTranspose2d,
    Downsampler,
    NonBt1d,
    conv2d,
    conv2d_grad,
    nonbt1d,
    relu,
    relu_grad,
    transposed_conv2d,
    transposed_conv2d_grad,
)


def layer_fd_check(layer, x, seed=0, eps=1e-6, atol=1e-5):
    """Finite-difference check of a layer's parameter and input grads
    against backward(), using loss = sum(forward * w)."""
    rng = np.random.default_rng(seed)
    params = layer.init_params(rng)
    for key in params:
        if params[key].ndim > 1:
            params[key] = rng.standard_normal(params[key].shape) * 0.3
        else:
            params[key] = rng.standard_normal(params[key].shape) * 0.1
    y, cache = layer.forward(params, x)
    w = rng.standard_normal(y.shape)
    gx, gp = layer.backward(params, cache, w)

    def loss():
        out, _ = layer.forward(params, x)
        return float((out * w).sum())

    worst = 0.0
    for key, arr in params.items():
        idx = rng.choice(arr.size, size=min(20, arr.size), replace=False)
        for flat in idx:
            orig = arr.flat[flat]
            arr.flat[flat] = orig + eps
            up = loss()
            arr.flat[flat] = orig - eps
            down = loss()
            arr.flat[flat] = orig
            num = (up - down) / (2 * eps)
            ana = gp[key].flat[flat]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    # input gradient
    idx = rng.choice(x.size, size=min(20, x.size), replace=False)
    for flat in idx:
        orig = x.flat[flat]
        x.flat[flat] = orig + eps
        up = loss()
        x.flat[flat] = orig - eps
        down = loss()
        x.flat[flat] = orig
        num = (up - down) / (2 * eps)
        ana = gx.flat[flat]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    assert worst <= 1e-3, f"{layer.name}: fd mismatch {worst:.2e}"


class TestFunctional:
    def test_relu(self):
        x = np.array([-2.0, -0.5, 0.0, 1.5])
        np.testing.assert_array_equal(relu(x), [0, 0, 0, 1.5])
        np.testing.assert_array_equal(relu_grad(x, np.ones(4)), [0, 0, 0, 1])

    def test_conv2d_wrappers(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 2, 6, 6))
        k = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        y = conv2d(x, k, b, padding=(1, 1))
        assert y.shape == (1, 3, 6, 6)
        gy = rng.standard_normal(y.shape)
        gx, gk, gb = conv2d_grad(x, k, gy, padding=(1, 1))
        assert gx.shape == x.shape and gk.shape == k.shape and gb.shape == b.shape

    def test_transposed_adjoint_identity_random(self):
        # <conv(z, K), x> == <z, convT(x, K)>: the same kernel array serves
        # both (conv reads it as (cout, cin, ...), convT as (cin, cout, ...)).
        rng = np.random.default_rng(1)
        for trial in range(5):
            z = rng.standard_normal((1, 3, 6, 7))
            k = rng.standard_normal((2, 3, 3, 3))
            cz = conv2d(z, k, None, stride=(2, 2), padding=(1, 1))
            x = rng.standard_normal(cz.shape)
            out_pad = (z.shape[2] - ((cz.shape[2] - 1) * 2 + 3 - 2),
                       z.shape[3] - ((cz.shape[3] - 1) * 2 + 3 - 2))
            zt = transposed_conv2d(x, k, None, stride=(2, 2), padding=(1, 1),
                                   out_padding=out_pad)
            assert zt.shape == z.shape
            lhs = float((cz * x).sum())
            rhs = float((z * zt).sum())
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_transposed_grad_shapes(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 2, 4, 4))
        k = rng.standard_normal((2, 3, 3, 3))
        y = transposed_conv2d(x, k, None, stride=(2, 2), padding=(1, 1), out_padding=(1, 1))
        assert y.shape == (1, 3, 8, 8)
        gx, gk, gb = transposed_conv2d_grad(
            x, k, rng.standard_normal(y.shape), stride=(2, 2), padding=(1, 1),
            out_padding=(1, 1),
        )
        assert gx.shape == x.shape and gk.shape == k.shape and gb.shape == (3,)


class TestBlocks:
    def test_nonbt1d_zero_weights_is_relu(self):
        rng = np.random.default_rng(3)
        block = NonBt1d("nb", 4)
        params = {k: np.zeros_like(v) for k, v in block.init_params(rng).items()}
        x = rng.standard_normal((2, 4, 5, 5))
        y = nonbt1d(x, params)
        np.testing.assert_array_equal(y, relu(x))

    def test_downsampler_shapes(self):
        rng = np.random.default_rng(4)
        block = Downsampler("down", 3, 8)
        params = block.init_params(rng)
        x = rng.standard_normal((2, 3, 8, 10))
        y, _ = block.forward(params, x)
        assert y.shape == (2, 8, 4, 5)

    def test_downsampler_pool_mode(self):
        rng = np.random.default_rng(5)
        block = Downsampler("down", 4, 4, mode="pool")
        assert block.init_params(rng) == {}
        x = rng.standard_normal((1, 4, 6, 6))
        y, _ = block.forward({}, x)
        assert y.shape == (1, 4, 3, 3)
        with pytest.raises(ValueError):
            Downsampler("bad", 4, 8, mode="pool")

    def test_conv_layer_gradcheck(self):
        rng = np.random.default_rng(6)
        layer_fd_check(Conv2d("c", 2, 3, (3, 3), padding=(1, 1)),
                       rng.standard_normal((2, 2, 6, 6)))
        layer_fd_check(Conv2d("c2", 1, 1, (1, 5), act="linear"),
                       rng.standard_normal((1, 1, 4, 9)), seed=1)

    def test_convt_layer_gradcheck(self):
        rng = np.random.default_rng(7)
        layer_fd_check(
            ConvTranspose2d("t", 3, 2, (3, 3), stride=(2, 2), padding=(1, 1),
                            out_padding=(1, 1), act="relu"),
            rng.standard_normal((1, 3, 4, 4)), seed=2,
        )

    def test_downsampler_gradcheck(self):
        rng = np.random.default_rng(8)
        layer_fd_check(Downsampler("d", 2, 5), rng.standard_normal((1, 2, 6, 6)), seed=3)

    def test_nonbt1d_gradcheck(self):
        rng = np.random.default_rng(9)
        layer_fd_check(NonBt1d("nb", 4), rng.standard_normal((1, 4, 6, 6)), seed=4)
