# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: same contract as ``rodforce._kernels_py``.

Loop-based versions of the bending and stretching state evaluations.  At the
30-100 node sizes this package runs at, the win over numpy comes from
skipping temporaries and dispatch, not from vector width.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()

IMPLEMENTATION = "cython"

FOLD_EPS = 1e-12
cdef double _FOLD_EPS = 1e-12


def bend_state(nodes, rest, double ei):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] l0 = np.ascontiguousarray(rest, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.zeros((n + 1, 3))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] moments = np.zeros((n + 1, 3))
    if n < 2:
        return 0.0, grad, moments

    cdef cnp.ndarray[cnp.float64_t, ndim=2] e = np.empty((n, 3))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lc = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.zeros((n, 3))
    cdef Py_ssize_t i, j, k
    cdef double energy = 0.0
    cdef double a, dot, denom, lbar, kb2, c0, cm, cp_, cn
    cdef double kb[3]
    cdef double gp[3]
    cdef double gn[3]

    for i in range(n):
        for k in range(3):
            e[i, k] = x[i + 1, k] - x[i, k]
        lc[i] = sqrt(e[i, 0] * e[i, 0] + e[i, 1] * e[i, 1] + e[i, 2] * e[i, 2])

    for j in range(1, n):
        a = lc[j - 1] * lc[j]
        dot = e[j - 1, 0] * e[j, 0] + e[j - 1, 1] * e[j, 1] + e[j - 1, 2] * e[j, 2]
        denom = a + dot
        if denom <= _FOLD_EPS * a:
            grad[:] = 0.0
            moments[:] = 0.0
            return INFINITY, grad, moments
        lbar = 0.5 * (l0[j - 1] + l0[j])

        kb[0] = 2.0 * (e[j - 1, 1] * e[j, 2] - e[j - 1, 2] * e[j, 1]) / denom
        kb[1] = 2.0 * (e[j - 1, 2] * e[j, 0] - e[j - 1, 0] * e[j, 2]) / denom
        kb[2] = 2.0 * (e[j - 1, 0] * e[j, 1] - e[j - 1, 1] * e[j, 0]) / denom
        kb2 = kb[0] * kb[0] + kb[1] * kb[1] + kb[2] * kb[2]
        energy += ei / (2.0 * lbar) * kb2

        cm = ei / lbar * 2.0 * a / denom
        for k in range(3):
            moments[j, k] = cm * kb[k]

        c0 = ei / (lbar * denom)
        # g_prev = c0 * (2 e_j x kb ... ) per the reference implementation
        gp[0] = 2.0 * (e[j, 1] * kb[2] - e[j, 2] * kb[1])
        gp[1] = 2.0 * (e[j, 2] * kb[0] - e[j, 0] * kb[2])
        gp[2] = 2.0 * (e[j, 0] * kb[1] - e[j, 1] * kb[0])
        gn[0] = 2.0 * (kb[1] * e[j - 1, 2] - kb[2] * e[j - 1, 1])
        gn[1] = 2.0 * (kb[2] * e[j - 1, 0] - kb[0] * e[j - 1, 2])
        gn[2] = 2.0 * (kb[0] * e[j - 1, 1] - kb[1] * e[j - 1, 0])
        cp_ = lc[j] / lc[j - 1]
        cn = lc[j - 1] / lc[j]
        for k in range(3):
            gp[k] = c0 * (gp[k] - kb2 * (e[j - 1, k] * cp_ + e[j, k]))
            gn[k] = c0 * (gn[k] - kb2 * (e[j, k] * cn + e[j - 1, k]))
            p[j - 1, k] += gp[k]
            p[j, k] += gn[k]

    for i in range(n):
        for k in range(3):
            grad[i, k] -= p[i, k]
            grad[i + 1, k] += p[i, k]
    return energy, grad, moments


def stretch_state(nodes, rest, ks):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] l0 = np.ascontiguousarray(rest, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] k_arr = np.ascontiguousarray(ks, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.zeros((n + 1, 3))
    cdef Py_ssize_t i, k
    cdef double energy = 0.0
    cdef double ex, ey, ez, lc, strain, c

    for i in range(n):
        ex = x[i + 1, 0] - x[i, 0]
        ey = x[i + 1, 1] - x[i, 1]
        ez = x[i + 1, 2] - x[i, 2]
        lc = sqrt(ex * ex + ey * ey + ez * ez)
        if lc <= 0.0:
            grad[:] = 0.0
            return INFINITY, grad
        strain = lc - l0[i]
        energy += 0.5 * k_arr[i] / l0[i] * strain * strain
        c = k_arr[i] * strain / (l0[i] * lc)
        grad[i, 0] -= c * ex
        grad[i, 1] -= c * ey
        grad[i, 2] -= c * ez
        grad[i + 1, 0] += c * ex
        grad[i + 1, 1] += c * ey
        grad[i + 1, 2] += c * ez
    return energy, grad
