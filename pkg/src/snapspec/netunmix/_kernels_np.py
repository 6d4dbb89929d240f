"""Pure NumPy convolution/pooling kernels (im2col based).

Reference backend: every function here has the same signature and
semantics as its compiled counterpart in ``_kernels_cy``.  Convolutions
use cross-correlation semantics; transposed convolutions are the exact
adjoints (see the inner-product identity tests).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _cols(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    # (N, Cin, Ho, Wo, kh, kw) view, strided to the requested stride.
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw]


def conv2d_forward(x, k, b, stride=(1, 1), pad=(0, 0)):
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    sh, sw = stride
    ph, pw = pad
    n, cin, h, w = x.shape
    cout, cin2, kh, kw = k.shape
    if cin != cin2:
        raise ValueError(f"channel mismatch: input {cin}, kernel {cin2}")
    xp = _pad(x, ph, pw)
    win = _cols(xp, kh, kw, sh, sw)
    y = np.einsum("nihwyx,oiyx->nohw", win, k, optimize=True)
    if b is not None:
        y += np.asarray(b, dtype=np.float64)[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward(x, k, gy, stride=(1, 1), pad=(0, 0)):
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    sh, sw = stride
    ph, pw = pad
    n, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = _pad(x, ph, pw)
    win = _cols(xp, kh, kw, sh, sw)
    gk = np.einsum("nihwyx,nohw->oiyx", win, gy, optimize=True)
    gb = gy.sum(axis=(0, 2, 3))
    gxp = np.zeros_like(xp)
    ho, wo = gy.shape[2], gy.shape[3]
    for dy in range(kh):
        for dx in range(kw):
            contrib = np.tensordot(gy, k[:, :, dy, dx], axes=([1], [0]))  # (N,Ho,Wo,Cin)
            gxp[:, :, dy:dy + sh * ho:sh, dx:dx + sw * wo:sw] += contrib.transpose(0, 3, 1, 2)
    gx = gxp[:, :, ph:ph + h, pw:pw + w]
    return np.ascontiguousarray(gx), gk, gb


def convt2d_forward(x, k, b, stride=(1, 1), pad=(0, 0), out_pad=(0, 0)):
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    sh, sw = stride
    ph, pw = pad
    oph, opw = out_pad
    n, cin, h, w = x.shape
    cin2, cout, kh, kw = k.shape
    if cin != cin2:
        raise ValueError(f"channel mismatch: input {cin}, kernel {cin2}")
    hf = (h - 1) * sh + kh + oph
    wf = (w - 1) * sw + kw + opw
    yf = np.zeros((n, cout, hf, wf))
    for dy in range(kh):
        for dx in range(kw):
            contrib = np.tensordot(x, k[:, :, dy, dx], axes=([1], [0]))  # (N,H,W,Cout)
            yf[:, :, dy:dy + sh * h:sh, dx:dx + sw * w:sw] += contrib.transpose(0, 3, 1, 2)
    ho = hf - 2 * ph
    wo = wf - 2 * pw
    y = yf[:, :, ph:ph + ho, pw:pw + wo]
    if b is not None:
        y = y + np.asarray(b, dtype=np.float64)[None, :, None, None]
    return np.ascontiguousarray(y)


def convt2d_backward(x, k, gy, stride=(1, 1), pad=(0, 0), out_pad=(0, 0)):
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    sh, sw = stride
    ph, pw = pad
    oph, opw = out_pad
    n, cin, h, w = x.shape
    _, cout, kh, kw = k.shape
    hf = (h - 1) * sh + kh + oph
    wf = (w - 1) * sw + kw + opw
    gyf = np.zeros((n, cout, hf, wf))
    gyf[:, :, ph:ph + gy.shape[2], pw:pw + gy.shape[3]] = gy
    win = _cols(gyf, kh, kw, sh, sw)[:, :, :h, :w]
    gx = np.einsum("nohwyx,ioyx->nihw", win, k, optimize=True)
    gk = np.einsum("nohwyx,nihw->ioyx", win, x, optimize=True)
    gb = gy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx), gk, gb


def maxpool2x2_forward(x):
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    r = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4
    )
    idx = r.argmax(axis=4).astype(np.int32)
    y = np.take_along_axis(r, idx[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2x2_backward(idx, gy, h, w):
    gy = np.asarray(gy, dtype=np.float64)
    n, c, ho, wo = gy.shape
    flat = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(flat, idx[..., None].astype(np.int64), gy[..., None], axis=4)
    gx = flat.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return np.ascontiguousarray(gx)
