"""Kernel dispatch.

The compiled module is preferred; set ``SPIN_PURE_PYTHON=1`` to force the
numpy fallback. ``BACKEND`` reports which one is active.
"""
import os

import numpy as np

from spin import _kernels_py

_compiled = None
if not os.environ.get("SPIN_PURE_PYTHON"):
    try:
        from spin import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py

__all__ = [
    "BACKEND",
    "csr_spmm",
    "segment_sum",
    "segment_weighted_sum",
    "segment_max",
    "segment_softmax",
    "segment_softmax_backward",
    "implementation",
]


def implementation(name=None):
    """Return the kernel module for ``name`` ("compiled"/"python"), default active."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def _idx(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f(a, dtype=None):
    a = np.asarray(a)
    if dtype is None:
        dtype = a.dtype if a.dtype in (np.float32, np.float64) else np.float64
    return np.ascontiguousarray(a, dtype=dtype)


def csr_spmm(row_ptr, col_idx, values, x):
    x = _f(x)
    return _impl.csr_spmm(_idx(row_ptr), _idx(col_idx), _f(values, x.dtype), x)


def segment_sum(x, offsets):
    return _impl.segment_sum(_f(x), _idx(offsets))


def segment_weighted_sum(x, w, offsets):
    x = _f(x)
    return _impl.segment_weighted_sum(x, _f(w, x.dtype), _idx(offsets))


def segment_max(x, offsets):
    return _impl.segment_max(_f(x), _idx(offsets))


def segment_softmax(scores, offsets):
    return _impl.segment_softmax(_f(scores), _idx(offsets))


def segment_softmax_backward(alpha, grad_alpha, offsets):
    alpha = _f(alpha)
    return _impl.segment_softmax_backward(alpha, _f(grad_alpha, alpha.dtype), _idx(offsets))
