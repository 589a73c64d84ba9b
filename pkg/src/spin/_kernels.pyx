# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: sparse x dense products and per-graph segment reductions.

Every function here has a numpy twin in :mod:`spin._kernels_py` with the same
signature; :mod:`spin.kernels` picks one at import time.
"""
import numpy as np

cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp

cnp.import_array()

ctypedef cnp.int64_t index_t


def csr_spmm(const index_t[::1] row_ptr, const index_t[::1] col_idx,
             const floating[::1] values, const floating[:, ::1] x):
    """Return ``A @ x`` for ``A`` in CSR form and dense row-major ``x``."""
    cdef Py_ssize_t n_rows = row_ptr.shape[0] - 1
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, k, j, c
    cdef floating a
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((n_rows, d), dtype=dtype)
    cdef floating[:, ::1] y = out
    with nogil:
        for i in range(n_rows):
            for k in range(row_ptr[i], row_ptr[i + 1]):
                c = col_idx[k]
                a = values[k]
                for j in range(d):
                    y[i, j] += a * x[c, j]
    return out


def segment_sum(const floating[:, ::1] x, const index_t[::1] offsets):
    """Sum the rows of ``x`` inside each ``[offsets[g], offsets[g+1])`` block."""
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t g, v, j
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((n_seg, d), dtype=dtype)
    cdef floating[:, ::1] y = out
    with nogil:
        for g in range(n_seg):
            for v in range(offsets[g], offsets[g + 1]):
                for j in range(d):
                    y[g, j] += x[v, j]
    return out


def segment_weighted_sum(const floating[:, ::1] x, const floating[::1] w,
                         const index_t[::1] offsets):
    """Per-segment ``sum_v w[v] * x[v]``."""
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t g, v, j
    cdef floating a
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((n_seg, d), dtype=dtype)
    cdef floating[:, ::1] y = out
    with nogil:
        for g in range(n_seg):
            for v in range(offsets[g], offsets[g + 1]):
                a = w[v]
                for j in range(d):
                    y[g, j] += a * x[v, j]
    return out


def segment_max(const floating[:, ::1] x, const index_t[::1] offsets):
    """Column-wise max per segment plus the (global) row index attaining it.

    Ties resolve to the first row. Empty segments give 0 and index -1.
    """
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t g, v, j, lo, hi
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((n_seg, d), dtype=dtype)
    arg = np.full((n_seg, d), -1, dtype=np.int64)
    cdef floating[:, ::1] y = out
    cdef index_t[:, ::1] a = arg
    with nogil:
        for g in range(n_seg):
            lo = offsets[g]
            hi = offsets[g + 1]
            if hi <= lo:
                continue
            for j in range(d):
                y[g, j] = x[lo, j]
                a[g, j] = lo
            for v in range(lo + 1, hi):
                for j in range(d):
                    if x[v, j] > y[g, j]:
                        y[g, j] = x[v, j]
                        a[g, j] = v
    return out, arg


def segment_softmax(const floating[::1] scores, const index_t[::1] offsets):
    """Softmax of ``scores`` taken separately inside each segment."""
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    cdef Py_ssize_t g, v, lo, hi
    cdef double m, total
    dtype = np.float64 if floating is double else np.float32
    out = np.empty(scores.shape[0], dtype=dtype)
    cdef floating[::1] y = out
    with nogil:
        for g in range(n_seg):
            lo = offsets[g]
            hi = offsets[g + 1]
            if hi <= lo:
                continue
            m = scores[lo]
            for v in range(lo + 1, hi):
                if scores[v] > m:
                    m = scores[v]
            total = 0.0
            for v in range(lo, hi):
                y[v] = <floating>exp(scores[v] - m)
                total += y[v]
            for v in range(lo, hi):
                y[v] = <floating>(y[v] / total)
    return out


def segment_softmax_backward(const floating[::1] alpha, const floating[::1] grad_alpha,
                             const index_t[::1] offsets):
    """Vector-Jacobian product of :func:`segment_softmax`."""
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    cdef Py_ssize_t g, v
    cdef double dot
    dtype = np.float64 if floating is double else np.float32
    out = np.empty(alpha.shape[0], dtype=dtype)
    cdef floating[::1] y = out
    with nogil:
        for g in range(n_seg):
            dot = 0.0
            for v in range(offsets[g], offsets[g + 1]):
                dot += alpha[v] * grad_alpha[v]
            for v in range(offsets[g], offsets[g + 1]):
                y[v] = <floating>(alpha[v] * (grad_alpha[v] - dot))
    return out
