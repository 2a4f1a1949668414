# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; same signatures as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def pairwise_sq_dists(Z):
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], e = z.shape[1], i, j, k
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] d = out
    cdef double s, t
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(e):
                t = z[i, k] - z[j, k]
                s += t * t
            d[i, j] = s
            d[j, i] = s
    return out


def lloyd_assign(Z, C):
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], kc = c.shape[0], e = z.shape[1], i, j, k
    labels = np.empty(n, dtype=np.int64)
    mind = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] lab = labels
    cdef double[::1] md = mind
    cdef double s, t, best
    cdef Py_ssize_t arg
    for i in range(n):
        best = 0.0
        arg = -1
        for j in range(kc):
            s = 0.0
            for k in range(e):
                t = z[i, k] - c[j, k]
                s += t * t
            if arg < 0 or s < best:
                best = s
                arg = j
        lab[i] = arg
        md[i] = best
    return labels, mind


def tuple_hinge(Z, tuples, double alpha1, double alpha2):
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    tarr = np.ascontiguousarray(tuples, dtype=np.int64)
    if tarr.size == 0:
        return np.zeros(0), np.zeros_like(np.asarray(z))
    cdef cnp.int64_t[:, ::1] tup = tarr
    cdef Py_ssize_t m = tup.shape[0], width = tup.shape[1], e = z.shape[1], r, k
    G = np.zeros((z.shape[0], e), dtype=np.float64)
    values = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] g = G
    cdef double[::1] val = values
    cdef Py_ssize_t a, p, n, q
    cdef double dap, dan, dqn, t, h1, h2
    for r in range(m):
        a = tup[r, 0]
        p = tup[r, 1]
        n = tup[r, 2]
        dap = 0.0
        dan = 0.0
        for k in range(e):
            t = z[a, k] - z[p, k]
            dap += t * t
            t = z[a, k] - z[n, k]
            dan += t * t
        h1 = dap - dan + alpha1
        if h1 > 0:
            val[r] += h1
            for k in range(e):
                g[a, k] += 2.0 * (z[n, k] - z[p, k])
                g[p, k] += 2.0 * (z[p, k] - z[a, k])
                g[n, k] += 2.0 * (z[a, k] - z[n, k])
        if width == 4:
            q = tup[r, 3]
            dqn = 0.0
            for k in range(e):
                t = z[q, k] - z[n, k]
                dqn += t * t
            h2 = dap - dqn + alpha2
            if h2 > 0:
                val[r] += h2
                for k in range(e):
                    g[a, k] += 2.0 * (z[a, k] - z[p, k])
                    g[p, k] += 2.0 * (z[p, k] - z[a, k])
                    g[n, k] += 2.0 * (z[q, k] - z[n, k])
                    g[q, k] += 2.0 * (z[n, k] - z[q, k])
    return values, G
