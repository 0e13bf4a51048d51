# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled evaluation of 2D trigonometric polynomials at scattered points.

Exponential tables are built by recurrence (one sincos per point and axis,
reseeded every 64 steps) and contracted with a BLAS zgemm per chunk.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

DEF CHUNK = 2048
DEF RESEED = 64


cdef void _table(double complex[:, ::1] e, const double[::1] x, Py_ssize_t s,
                 Py_ssize_t p, Py_ssize_t m, double scale) noexcept nogil:
    cdef Py_ssize_t i, a, L = 2 * m + 1
    cdef double t
    cdef double complex w, v
    for i in range(p):
        t = scale * x[s + i]
        w = cos(t) + 1j * sin(t)
        for a in range(L):
            if a % RESEED == 0:
                v = cos((a - m) * t) + 1j * sin((a - m) * t)
            else:
                v = v * w
            e[i, a] = v


def eval_trig(table, double scale, x1, x2):
    """Same contract as the numpy fallback: returns (C, P) complex values."""
    cdef double complex[:, :, ::1] tab = np.ascontiguousarray(table, dtype=np.complex128)
    cdef const double[::1] px = np.ascontiguousarray(x1, dtype=np.float64).ravel()
    cdef const double[::1] py = np.ascontiguousarray(x2, dtype=np.float64).ravel()
    cdef Py_ssize_t C = tab.shape[0], L = tab.shape[1]
    cdef Py_ssize_t m = (L - 1) // 2
    cdef Py_ssize_t P = px.shape[0]
    out_arr = np.empty((C, P), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[:, ::1] e1 = np.empty((CHUNK, L), dtype=np.complex128)
    cdef double complex[:, ::1] e2 = np.empty((CHUNK, L), dtype=np.complex128)
    cdef double complex[:, ::1] w = np.empty((CHUNK, L), dtype=np.complex128)
    cdef Py_ssize_t s, p, i, a, c
    cdef int M_, N_, K_, lda, ldb, ldc
    cdef char ta = b'T'
    cdef char tb = b'N'
    cdef double complex one = 1.0, zero = 0.0, acc
    if P == 0 or L == 0:
        return out_arr
    with nogil:
        s = 0
        while s < P:
            p = min(CHUNK, P - s)
            _table(e1, px, s, p, m, scale)
            _table(e2, py, s, p, m, scale)
            for c in range(C):
                # column-major view: W^T (L x p) = tab_c (L x L) @ E2^T (L x p)
                M_ = <int>L
                N_ = <int>p
                K_ = <int>L
                lda = <int>L
                ldb = <int>L
                ldc = <int>L
                zgemm(&ta, &tb, &M_, &N_, &K_, &one, &tab[c, 0, 0], &lda,
                      &e2[0, 0], &ldb, &zero, &w[0, 0], &ldc)
                for i in range(p):
                    acc = 0
                    for a in range(L):
                        acc = acc + e1[i, a] * w[i, a]
                    out[c, s + i] = acc
            s += p
    return out_arr
