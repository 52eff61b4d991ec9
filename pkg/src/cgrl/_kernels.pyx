# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sparse segment kernels; see _kernels_py for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def spmm(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
         const double[::1] data, const double[:, ::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = x.shape[1]
    out = np.zeros((n, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t v, e, k, u
    cdef double w
    for v in range(n):
        for e in range(indptr[v], indptr[v + 1]):
            u = indices[e]
            w = data[e]
            for k in range(d):
                o[v, k] += w * x[u, k]
    return out


def spmm_t(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
           const double[::1] data, const double[:, ::1] g, Py_ssize_t n_src):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = g.shape[1]
    out = np.zeros((n_src, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t v, e, k, u
    cdef double w
    for v in range(n):
        for e in range(indptr[v], indptr[v + 1]):
            u = indices[e]
            w = data[e]
            for k in range(d):
                o[u, k] += w * g[v, k]
    return out


def segment_sum(const double[:, ::1] values, const cnp.int64_t[::1] indptr):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = values.shape[1]
    out = np.zeros((n, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t v, e, k
    for v in range(n):
        for e in range(indptr[v], indptr[v + 1]):
            for k in range(d):
                o[v, k] += values[e, k]
    return out


def segment_softmax(const double[::1] scores, const cnp.int64_t[::1] indptr):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.empty(scores.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t v, e
    cdef double m, s
    for v in range(n):
        m = -INFINITY
        for e in range(indptr[v], indptr[v + 1]):
            if scores[e] > m:
                m = scores[e]
        s = 0.0
        for e in range(indptr[v], indptr[v + 1]):
            o[e] = exp(scores[e] - m)
            s += o[e]
        for e in range(indptr[v], indptr[v + 1]):
            o[e] /= s
    return out


def scatter_add_rows(const double[:, ::1] values, const cnp.int64_t[::1] index,
                     Py_ssize_t n):
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    out = np.zeros((n, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, k, r
    for i in range(m):
        r = index[i]
        for k in range(d):
            o[r, k] += values[i, k]
    return out
