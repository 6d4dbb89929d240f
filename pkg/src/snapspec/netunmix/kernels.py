"""Kernel backend selection.

The compiled extension (``_kernels_cy``) is preferred when it imported
cleanly; the NumPy implementation is the always-available fallback.
Set the environment variable ``SNAPSPEC_KERNELS`` to ``numpy`` or
``cython`` to force a backend at import time, or call
:func:`set_backend` at runtime (used by the benchmark and the
cross-checking tests).
"""

from __future__ import annotations

import os

from . import _kernels_np

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

_impl = None
_name = ""


def set_backend(name: str) -> str:
    """Select 'numpy', 'cython', or 'auto'; returns the active name."""
    global _impl, _name
    if name == "numpy":
        _impl, _name = _kernels_np, "numpy"
    elif name == "cython":
        if _kernels_cy is None:
            raise RuntimeError("compiled kernel extension not available")
        _impl, _name = _kernels_cy, "cython"
    elif name == "auto":
        if _kernels_cy is not None:
            _impl, _name = _kernels_cy, "cython"
        else:
            _impl, _name = _kernels_np, "numpy"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return _name


def backend_name() -> str:
    return _name


def available_backends() -> tuple[str, ...]:
    return ("numpy", "cython") if _kernels_cy is not None else ("numpy",)


set_backend(os.environ.get("SNAPSPEC_KERNELS", "auto"))


def conv2d_forward(*args, **kwargs):
    return _impl.conv2d_forward(*args, **kwargs)


def conv2d_backward(*args, **kwargs):
    return _impl.conv2d_backward(*args, **kwargs)


def convt2d_forward(*args, **kwargs):
    return _impl.convt2d_forward(*args, **kwargs)


def convt2d_backward(*args, **kwargs):
    return _impl.convt2d_backward(*args, **kwargs)


def maxpool2x2_forward(*args, **kwargs):
    return _impl.maxpool2x2_forward(*args, **kwargs)


def maxpool2x2_backward(*args, **kwargs):
    return _impl.maxpool2x2_backward(*args, **kwargs)
