"""Network building blocks with explicit forward and backward passes.

Tensors are float64 arrays shaped (batch, channels, height, width).
Each layer class owns its parameter block (a dict of arrays), exposes
``init_params(rng)``, ``forward(params, x) -> (y, cache)`` and
``backward(params, cache, gy) -> (gx, grads)``.  Thin functional
wrappers (conv2d / conv2d_grad etc.) cover the primitive operations.
"""

from __future__ import annotations

import numpy as np

from . import kernels


def _he_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


# ----------------------------------------------------------------------
# Functional primitives


def conv2d(x, kernel, bias=None, stride=(1, 1), padding=(0, 0)):
    """Cross-correlation of (N,Cin,H,W) with kernel (Cout,Cin,kh,kw)."""
    return kernels.conv2d_forward(x, kernel, bias, stride, padding)


def conv2d_grad(x, kernel, gy, stride=(1, 1), padding=(0, 0)):
    """Analytic gradients of conv2d w.r.t. (input, kernel, bias)."""
    return kernels.conv2d_backward(x, kernel, gy, stride, padding)


def transposed_conv2d(x, kernel, bias=None, stride=(1, 1), padding=(0, 0), out_padding=(0, 0)):
    """Adjoint of conv2d; kernel is (Cin,Cout,kh,kw)."""
    return kernels.convt2d_forward(x, kernel, bias, stride, padding, out_padding)


def transposed_conv2d_grad(x, kernel, gy, stride=(1, 1), padding=(0, 0), out_padding=(0, 0)):
    return kernels.convt2d_backward(x, kernel, gy, stride, padding, out_padding)


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x, gy):
    return gy * (x > 0.0)


# ----------------------------------------------------------------------
# Layer classes


class Conv2d:
    def __init__(self, name, cin, cout, ksize, stride=(1, 1), padding=(0, 0), act="relu"):
        self.name = name
        self.cin = cin
        self.cout = cout
        self.ksize = ksize
        self.stride = stride
        self.padding = padding
        self.act = act

    def init_params(self, rng):
        kh, kw = self.ksize
        kern = _he_init(rng, (self.cout, self.cin, kh, kw), self.cin * kh * kw)
        return {"kernel": kern, "bias": np.zeros(self.cout)}

    def forward(self, p, x):
        z = kernels.conv2d_forward(x, p["kernel"], p["bias"], self.stride, self.padding)
        if self.act == "relu":
            return relu(z), (x, z)
        return z, (x, None)

    def backward(self, p, cache, gy):
        x, z = cache
        if self.act == "relu":
            gy = relu_grad(z, gy)
        gx, gk, gb = kernels.conv2d_backward(x, p["kernel"], gy, self.stride, self.padding)
        return gx, {"kernel": gk, "bias": gb}

    def out_shape(self, c, h, w):
        kh, kw = self.ksize
        sh, sw = self.stride
        ph, pw = self.padding
        return self.cout, (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


class ConvTranspose2d:
    def __init__(self, name, cin, cout, ksize, stride=(1, 1), padding=(0, 0),
                 out_padding=(0, 0), act="linear"):
        self.name = name
        self.cin = cin
        self.cout = cout
        self.ksize = ksize
        self.stride = stride
        self.padding = padding
        self.out_padding = out_padding
        self.act = act

    def init_params(self, rng):
        kh, kw = self.ksize
        kern = _he_init(rng, (self.cin, self.cout, kh, kw), self.cin * kh * kw)
        return {"kernel": kern, "bias": np.zeros(self.cout)}

    def forward(self, p, x):
        z = kernels.convt2d_forward(
            x, p["kernel"], p["bias"], self.stride, self.padding, self.out_padding
        )
        if self.act == "relu":
            return relu(z), (x, z)
        return z, (x, None)

    def backward(self, p, cache, gy):
        x, z = cache
        if self.act == "relu":
            gy = relu_grad(z, gy)
        gx, gk, gb = kernels.convt2d_backward(
            x, p["kernel"], gy, self.stride, self.padding, self.out_padding
        )
        return gx, {"kernel": gk, "bias": gb}

    def out_shape(self, c, h, w):
        kh, kw = self.ksize
        sh, sw = self.stride
        ph, pw = self.padding
        oph, opw = self.out_padding
        return self.cout, (h - 1) * sh + kh - 2 * ph + oph, (w - 1) * sw + kw - 2 * pw + opw


class Downsampler:
    """Halve resolution: concat of a stride-2 3x3 conv (cout - cin
    filters) with a 2x2 max pool of the input, then the activation.
    ``mode='pool'`` keeps channels and pools only."""

    def __init__(self, name, cin, cout, mode="erfnet", act="relu"):
        if mode not in ("erfnet", "pool"):
            raise ValueError(f"unknown downsampler mode {mode!r}")
        if mode == "erfnet" and cout <= cin:
            raise ValueError("erfnet downsampler needs cout > cin")
        if mode == "pool" and cout != cin:
            raise ValueError("pool-only downsampler keeps the channel count")
        self.name = name
        self.cin = cin
        self.cout = cout
        self.mode = mode
        self.act = act

    def init_params(self, rng):
        if self.mode == "pool":
            return {}
        nconv = self.cout - self.cin
        return {
            "kernel": _he_init(rng, (nconv, self.cin, 3, 3), self.cin * 9),
            "bias": np.zeros(nconv),
        }

    def forward(self, p, x):
        pooled, idx = kernels.maxpool2x2_forward(x)
        if self.mode == "pool":
            z = pooled
        else:
            conv = kernels.conv2d_forward(x, p["kernel"], p["bias"], (2, 2), (1, 1))
            z = np.concatenate([conv, pooled], axis=1)
        if self.act == "relu":
            return relu(z), (x, idx, z)
        return z, (x, idx, None)

    def backward(self, p, cache, gy):
        x, idx, z = cache
        if self.act == "relu":
            gy = relu_grad(z, gy)
        h, w = x.shape[2], x.shape[3]
        if self.mode == "pool":
            return kernels.maxpool2x2_backward(idx, gy, h, w), {}
        nconv = self.cout - self.cin
        g_conv = gy[:, :nconv]
        g_pool = gy[:, nconv:]
        gx_pool = kernels.maxpool2x2_backward(idx, g_pool, h, w)
        gx_conv, gk, gb = kernels.conv2d_backward(x, p["kernel"], g_conv, (2, 2), (1, 1))
        return gx_pool + gx_conv, {"kernel": gk, "bias": gb}

    def out_shape(self, c, h, w):
        return self.cout, h // 2, w // 2


class NonBt1d:
    """Residual block of factorized convolutions: 3x1, 1x3, 3x1, 1x3
    (activation between each and after the residual add)."""

    _seq = (
        ((3, 1), (1, 0)),
        ((1, 3), (0, 1)),
        ((3, 1), (1, 0)),
        ((1, 3), (0, 1)),
    )

    def __init__(self, name, channels, act="relu"):
        self.name = name
        self.channels = channels
        self.act = act

    def init_params(self, rng):
        p = {}
        c = self.channels
        for i, (ks, _) in enumerate(self._seq, start=1):
            p[f"kernel{i}"] = _he_init(rng, (c, c, ks[0], ks[1]), c * ks[0] * ks[1])
            p[f"bias{i}"] = np.zeros(c)
        return p

    def _act(self, z):
        return relu(z) if self.act == "relu" else z

    def forward(self, p, x):
        zs = []
        cur = x
        for i, (ks, pad) in enumerate(self._seq, start=1):
            z = kernels.conv2d_forward(cur, p[f"kernel{i}"], p[f"bias{i}"], (1, 1), pad)
            zs.append((cur, z))
            cur = self._act(z) if i < 4 else z
        out_pre = cur + x
        return self._act(out_pre), (zs, out_pre)

    def backward(self, p, cache, gy):
        zs, out_pre = cache
        if self.act == "relu":
            gy = relu_grad(out_pre, gy)
        g_res = gy  # gradient into the residual branch output
        grads = {}
        cur = g_res
        for i in range(4, 0, -1):
            x_in, z = zs[i - 1]
            if i < 4 and self.act == "relu":
                cur = relu_grad(z, cur)
            _, pad = self._seq[i - 1]
            gx, gk, gb = kernels.conv2d_backward(x_in, p[f"kernel{i}"], cur, (1, 1), pad)
            grads[f"kernel{i}"] = gk
            grads[f"bias{i}"] = gb
            cur = gx
        return cur + gy, grads

    def out_shape(self, c, h, w):
        return c, h, w


def nonbt1d(x, params, act="relu"):
    """Functional forward of a NonBt1d block on a (N,C,H,W) tensor."""
    block = NonBt1d("nonbt1d", x.shape[1], act=act)
    y, _ = block.forward(params, x)
    return y


def downsampler(x, params, cout, mode="erfnet", act="relu"):
    """Functional forward of a Downsampler block."""
    block = Downsampler("downsampler", x.shape[1], cout, mode=mode, act=act)
    y, _ = block.forward(params, x)
    return y
