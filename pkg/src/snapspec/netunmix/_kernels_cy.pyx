# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution/pooling kernels.

Direct-loop float64 implementations of the hot inner loops; semantics
match ``_kernels_np`` exactly (same signatures, cross-correlation
convolution, adjoint transposed convolution, first-max pooling ties).
"""

import numpy as np


def conv2d_forward(x, k, b, stride=(1, 1), pad=(0, 0)):
    x = np.ascontiguousarray(x, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    cdef int sh = stride[0], sw = stride[1]
    cdef int ph = pad[0], pw = pad[1]
    cdef int n = x.shape[0], cin = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int cout = k.shape[0], kh = k.shape[2], kw = k.shape[3]
    if k.shape[1] != cin:
        raise ValueError(f"channel mismatch: input {cin}, kernel {k.shape[1]}")
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cdef int ho = (h + 2 * ph - kh) // sh + 1
    cdef int wo = (w + 2 * pw - kw) // sw + 1
    y = np.zeros((n, cout, ho, wo))
    bias = np.zeros(cout) if b is None else np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] kv = k
    cdef double[:, :, :, ::1] yv = y
    cdef double[::1] bv = bias
    cdef int ni, co, ci, oy, ox, dy, dx
    cdef double acc
    for ni in range(n):
        for co in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc = bv[co]
                    for ci in range(cin):
                        for dy in range(kh):
                            for dx in range(kw):
                                acc += xv[ni, ci, oy * sh + dy, ox * sw + dx] * kv[co, ci, dy, dx]
                    yv[ni, co, oy, ox] = acc
    return y


def conv2d_backward(x, k, gy, stride=(1, 1), pad=(0, 0)):
    x = np.ascontiguousarray(x, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef int sh = stride[0], sw = stride[1]
    cdef int ph = pad[0], pw = pad[1]
    cdef int n = x.shape[0], cin = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int cout = k.shape[0], kh = k.shape[2], kw = k.shape[3]
    cdef int ho = gy.shape[2], wo = gy.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    gxp = np.zeros_like(xp)
    gk = np.zeros_like(k)
    gb = np.zeros(cout)
    cdef double[:, :, :, ::1] xv = xp
    cdef double[:, :, :, ::1] kv = k
    cdef double[:, :, :, ::1] gyv = gy
    cdef double[:, :, :, ::1] gxv = gxp
    cdef double[:, :, :, ::1] gkv = gk
    cdef double[::1] gbv = gb
    cdef int ni, co, ci, oy, ox, dy, dx
    cdef double g
    for ni in range(n):
        for co in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    g = gyv[ni, co, oy, ox]
                    gbv[co] += g
                    for ci in range(cin):
                        for dy in range(kh):
                            for dx in range(kw):
                                gxv[ni, ci, oy * sh + dy, ox * sw + dx] += g * kv[co, ci, dy, dx]
                                gkv[co, ci, dy, dx] += g * xv[ni, ci, oy * sh + dy, ox * sw + dx]
    gx = gxp[:, :, ph:ph + h, pw:pw + w] if (ph or pw) else gxp
    return np.ascontiguousarray(gx), gk, gb


def convt2d_forward(x, k, b, stride=(1, 1), pad=(0, 0), out_pad=(0, 0)):
    x = np.ascontiguousarray(x, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    cdef int sh = stride[0], sw = stride[1]
    cdef int ph = pad[0], pw = pad[1]
    cdef int oph = out_pad[0], opw = out_pad[1]
    cdef int n = x.shape[0], cin = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int cout = k.shape[1], kh = k.shape[2], kw = k.shape[3]
    if k.shape[0] != cin:
        raise ValueError(f"channel mismatch: input {cin}, kernel {k.shape[0]}")
    cdef int hf = (h - 1) * sh + kh + oph
    cdef int wf = (w - 1) * sw + kw + opw
    yf = np.zeros((n, cout, hf, wf))
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] kv = k
    cdef double[:, :, :, ::1] yv = yf
    cdef int ni, co, ci, iy, ix, dy, dx
    cdef double v
    for ni in range(n):
        for ci in range(cin):
            for iy in range(h):
                for ix in range(w):
                    v = xv[ni, ci, iy, ix]
                    for co in range(cout):
                        for dy in range(kh):
                            for dx in range(kw):
                                yv[ni, co, iy * sh + dy, ix * sw + dx] += v * kv[ci, co, dy, dx]
    y = yf[:, :, ph:hf - ph, pw:wf - pw]
    if b is not None:
        y = y + np.asarray(b, dtype=np.float64)[None, :, None, None]
    return np.ascontiguousarray(y)


def convt2d_backward(x, k, gy, stride=(1, 1), pad=(0, 0), out_pad=(0, 0)):
    x = np.ascontiguousarray(x, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef int sh = stride[0], sw = stride[1]
    cdef int ph = pad[0], pw = pad[1]
    cdef int oph = out_pad[0], opw = out_pad[1]
    cdef int n = x.shape[0], cin = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int cout = k.shape[1], kh = k.shape[2], kw = k.shape[3]
    cdef int hf = (h - 1) * sh + kh + oph
    cdef int wf = (w - 1) * sw + kw + opw
    gyf = np.zeros((n, cout, hf, wf))
    gyf[:, :, ph:ph + gy.shape[2], pw:pw + gy.shape[3]] = gy
    gx = np.zeros_like(x)
    gk = np.zeros_like(k)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] kv = k
    cdef double[:, :, :, ::1] gyv = gyf
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, :, :, ::1] gkv = gk
    cdef int ni, co, ci, iy, ix, dy, dx
    cdef double acc, xval
    for ni in range(n):
        for ci in range(cin):
            for iy in range(h):
                for ix in range(w):
                    acc = 0.0
                    xval = xv[ni, ci, iy, ix]
                    for co in range(cout):
                        for dy in range(kh):
                            for dx in range(kw):
                                acc += gyv[ni, co, iy * sh + dy, ix * sw + dx] * kv[ci, co, dy, dx]
                                gkv[ci, co, dy, dx] += xval * gyv[ni, co, iy * sh + dy, ix * sw + dx]
                    gxv[ni, ci, iy, ix] = acc
    gb = np.asarray(gy).sum(axis=(0, 2, 3))
    return gx, gk, gb


def maxpool2x2_forward(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    cdef int ho = h // 2, wo = w // 2
    y = np.zeros((n, c, ho, wo))
    idx = np.zeros((n, c, ho, wo), dtype=np.int32)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] yv = y
    cdef int[:, :, :, ::1] iv = idx
    cdef int ni, ci, oy, ox, q, best
    cdef double vmax, v
    for ni in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    vmax = xv[ni, ci, 2 * oy, 2 * ox]
                    best = 0
                    for q in range(1, 4):
                        v = xv[ni, ci, 2 * oy + q // 2, 2 * ox + q % 2]
                        if v > vmax:
                            vmax = v
                            best = q
                    yv[ni, ci, oy, ox] = vmax
                    iv[ni, ci, oy, ox] = best
    return y, idx


def maxpool2x2_backward(idx, gy, h, w):
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int32)
    cdef int n = gy.shape[0], c = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    gx = np.zeros((n, c, h, w))
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, :, :, ::1] gyv = gy
    cdef int[:, :, :, ::1] iv = idx
    cdef int ni, ci, oy, ox, q
    for ni in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    q = iv[ni, ci, oy, ox]
                    gxv[ni, ci, 2 * oy + q // 2, 2 * ox + q % 2] += gyv[ni, ci, oy, ox]
    return gx
