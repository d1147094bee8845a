# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_pykernels``.

Same contracts and argument layout; see the pure-Python module for docs.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def linear_greedy(const double[:, ::1] X, double[:, ::1] inv, double[::1] sqdiv,
                  unsigned char[::1] active, double eps):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k, best_j
    cdef double best, q, denom, p, s
    cdef double[::1] u = np.empty(d, dtype=np.float64)
    picks = []
    gains = []
    # the argmax for the next pick is taken during each update pass
    best_j = -1
    best = 0.0
    for j in range(n):
        if active[j] and (best_j < 0 or sqdiv[j] > best):
            best = sqdiv[j]
            best_j = j
    while best_j >= 0:
        if best < 0.0:
            best = 0.0
        if sqrt(best) <= eps:
            break
        q = 0.0
        for i in range(d):
            s = 0.0
            for k in range(d):
                s = s + inv[i, k] * X[best_j, k]
            u[i] = s
            q = q + X[best_j, i] * s
        denom = 1.0 + q
        for i in range(d):
            for k in range(d):
                inv[i, k] = inv[i, k] - u[i] * u[k] / denom
        active[best_j] = 0
        picks.append(best_j)
        gains.append(q)
        best_j = -1
        best = 0.0
        for j in range(n):
            if active[j]:
                p = 0.0
                for k in range(d):
                    p = p + X[j, k] * u[k]
                sqdiv[j] = sqdiv[j] - p * p / denom
                if best_j < 0 or sqdiv[j] > best:
                    best = sqdiv[j]
                    best_j = j
    return np.asarray(picks, dtype=np.int64), np.asarray(gains, dtype=np.float64)


cdef double _col_sqdiv(const double[:, ::1] cols, Py_ssize_t g, double[:, ::1] denom) nogil:
    cdef Py_ssize_t m = cols.shape[1], f, h
    cdef double best = 0.0, diff, r
    for f in range(m):
        for h in range(m):
            diff = cols[g, f] - cols[g, h]
            r = (diff * diff) / (denom[f, h] + 1.0)
            if r > best:
                best = r
    return best


def group_sqdiv(const double[:, ::1] cols, double[:, ::1] denom):
    cdef Py_ssize_t g, n_groups = cols.shape[0]
    out = np.empty(n_groups, dtype=np.float64)
    cdef double[::1] o = out
    for g in range(n_groups):
        o[g] = _col_sqdiv(cols, g, denom)
    return out


def nl_greedy(const double[:, ::1] cols, const cnp.int64_t[::1] members,
              const cnp.int64_t[::1] group_ptr, cnp.int64_t[::1] next_ptr,
              double[:, ::1] denom, double eps):
    cdef Py_ssize_t n_groups = cols.shape[0], m = cols.shape[1]
    cdef Py_ssize_t g, f, h, best_g
    cdef cnp.int64_t idx, best_idx, version = 0
    cdef double dg, best_d, diff
    cdef double[::1] d2 = np.empty(n_groups, dtype=np.float64)
    cdef cnp.int64_t[::1] stamp = np.zeros(n_groups, dtype=np.int64)
    for g in range(n_groups):
        d2[g] = _col_sqdiv(cols, g, denom)
    picks = []
    sqdivs = []
    while True:
        best_g = -1
        best_d = -1.0
        best_idx = 0
        for g in range(n_groups):
            if next_ptr[g] >= group_ptr[g + 1] - group_ptr[g]:
                continue
            dg = sqrt(d2[g])
            idx = members[group_ptr[g] + next_ptr[g]]
            if dg > best_d or (dg == best_d and idx < best_idx):
                best_g = g
                best_d = dg
                best_idx = idx
        if best_g < 0:
            break
        # stale values are upper bounds; refresh the leader before taking it
        if stamp[best_g] != version:
            d2[best_g] = _col_sqdiv(cols, best_g, denom)
            stamp[best_g] = version
            continue
        if best_d <= eps:
            break
        picks.append(best_idx)
        sqdivs.append(d2[best_g])
        next_ptr[best_g] += 1
        for f in range(m):
            for h in range(m):
                diff = cols[best_g, f] - cols[best_g, h]
                denom[f, h] = denom[f, h] + diff * diff
        version += 1
    return np.asarray(picks, dtype=np.int64), np.asarray(sqdivs, dtype=np.float64)
