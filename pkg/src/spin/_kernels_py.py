"""Pure numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or ``SPIN_PURE_PYTHON=1``.
Signatures and results match :mod:`spin._kernels`.
"""
import numpy as np


def _segment_ids(offsets):
    counts = np.diff(offsets)
    return np.repeat(np.arange(len(counts)), counts)


def csr_spmm(row_ptr, col_idx, values, x):
    n_rows = len(row_ptr) - 1
    out = np.zeros((n_rows, x.shape[1]), dtype=x.dtype)
    if len(col_idx) == 0:
        return out
    rows = _segment_ids(row_ptr)
    np.add.at(out, rows, values[:, None] * x[col_idx])
    return out


def segment_sum(x, offsets):
    out = np.zeros((len(offsets) - 1, x.shape[1]), dtype=x.dtype)
    np.add.at(out, _segment_ids(offsets), x)
    return out


def segment_weighted_sum(x, w, offsets):
    return segment_sum(x * w[:, None], offsets)


def segment_max(x, offsets):
    n_seg = len(offsets) - 1
    out = np.zeros((n_seg, x.shape[1]), dtype=x.dtype)
    arg = np.full((n_seg, x.shape[1]), -1, dtype=np.int64)
    for g in range(n_seg):
        lo, hi = offsets[g], offsets[g + 1]
        if hi > lo:
            local = np.argmax(x[lo:hi], axis=0)
            arg[g] = lo + local
            out[g] = x[lo + local, np.arange(x.shape[1])]
    return out, arg


def segment_softmax(scores, offsets):
    seg = _segment_ids(offsets)
    m = np.full(len(offsets) - 1, -np.inf, dtype=scores.dtype)
    np.maximum.at(m, seg, scores)
    e = np.exp(scores - m[seg])
    total = np.zeros(len(offsets) - 1, dtype=scores.dtype)
    np.add.at(total, seg, e)
    return e / total[seg]


def segment_softmax_backward(alpha, grad_alpha, offsets):
    seg = _segment_ids(offsets)
    dot = np.zeros(len(offsets) - 1, dtype=alpha.dtype)
    np.add.at(dot, seg, alpha * grad_alpha)
    return alpha * (grad_alpha - dot[seg])
