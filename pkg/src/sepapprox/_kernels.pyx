# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels; same signatures as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()


cdef inline Py_ssize_t _locate(const double[::1] nodes, double x, double* t) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = nodes.shape[0] - 1, mid
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if nodes[mid] <= x:
            lo = mid
        else:
            hi = mid
    t[0] = (x - nodes[lo]) / (nodes[lo + 1] - nodes[lo])
    return lo


def interp_gamma(const double[:, :, :, :, ::1] flat, const double[::1] nodes,
                 const double[:, ::1] queries):
    cdef Py_ssize_t M = queries.shape[0], m, d, c, e
    cdef Py_ssize_t k[4]
    cdef Py_ssize_t i0, i1, i2, i3
    cdef double t[4]
    cdef double w
    out_arr = np.zeros((M, 4))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for m in range(M):
            for d in range(4):
                k[d] = _locate(nodes, queries[m, d], &t[d])
            for c in range(16):
                w = 1.0
                i0 = k[0] + ((c >> 3) & 1)
                i1 = k[1] + ((c >> 2) & 1)
                i2 = k[2] + ((c >> 1) & 1)
                i3 = k[3] + (c & 1)
                w *= t[0] if (c >> 3) & 1 else 1.0 - t[0]
                w *= t[1] if (c >> 2) & 1 else 1.0 - t[1]
                w *= t[2] if (c >> 1) & 1 else 1.0 - t[2]
                w *= t[3] if c & 1 else 1.0 - t[3]
                for e in range(4):
                    out[m, e] += w * flat[i0, i1, i2, i3, e]
    return out_arr


def rational_correction(G, g, area, delta):
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=float).reshape(-1, 4)
    cdef const double[:, ::1] gv = np.ascontiguousarray(g, dtype=float)
    cdef Py_ssize_t M = Gv.shape[0], i
    ar = np.broadcast_to(np.asarray(area, dtype=float), (M,)).copy()
    de = np.broadcast_to(np.asarray(delta, dtype=float), (M,)).copy()
    cdef const double[::1] av = ar
    cdef const double[::1] dv = de
    out_arr = np.empty(M)
    cdef double[::1] out = out_arr
    cdef double m00, m01, m10, m11, det, g0, g1, dl
    with nogil:
        for i in range(M):
            dl = dv[i]
            m00 = 1.0 - dl * Gv[i, 0]
            m01 = -dl * Gv[i, 1]
            m10 = -dl * Gv[i, 2]
            m11 = 1.0 - dl * Gv[i, 3]
            det = m00 * m11 - m01 * m10
            g0 = gv[i, 0]
            g1 = gv[i, 1]
            out[i] = -av[i] * dl * (g0 * (m11 * g0 - m01 * g1)
                                    + g1 * (-m10 * g0 + m00 * g1)) / det
    return out_arr


def holder_means(indptr, indices, weights, values, double alpha, fallback):
    cdef const long long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long long[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=float)
    # one power per value instead of one per nonzero
    cdef const double[::1] v = np.power(np.asarray(values, dtype=float), alpha)
    cdef Py_ssize_t n = ip.shape[0] - 1, r, j
    out_arr = np.array(fallback, dtype=float, copy=True)
    empty_arr = np.zeros(n, dtype=bool)
    cdef double[::1] out = out_arr
    cdef cnp.npy_bool[::1] empty = empty_arr
    cdef double ws, acc
    with nogil:
        for r in range(n):
            ws = 0.0
            acc = 0.0
            for j in range(ip[r], ip[r + 1]):
                ws += w[j]
                acc += w[j] * v[ix[j]]
            if ws > 0.0:
                out[r] = pow(acc / ws, 1.0 / alpha)
            else:
                empty[r] = 1
    return out_arr, empty_arr
