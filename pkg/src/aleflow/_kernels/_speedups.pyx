# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused C loops for the pointwise tensor algebra in the operator hot path.

These mirror the functions in ``aleflow._kernels.pure`` exactly; parity is
asserted in the test suite.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def pack_coefficients(coeff):
    """Backend-preferred storage of a (2,2,2,2,...) coefficient field.

    The C loop reads one node at a time, so the sixteen values of a node are
    stored contiguously (node-major layout).
    """
    arr = np.asarray(coeff).reshape(2, 2, 2, 2, -1)
    return np.ascontiguousarray(np.moveaxis(arr, -1, 0))


def contract44(cnp.ndarray[double, ndim=5] coeff not None,
               cnp.ndarray[double, ndim=3] grad not None):
    """out[s, k, n] = sum_ij coeff[n, s, k, i, j] * grad[i, j, n].

    ``coeff`` must come from :func:`pack_coefficients` of this backend.
    """
    cdef Py_ssize_t n = grad.shape[2]
    cdef cnp.ndarray[double, ndim=3] out = np.empty((2, 2, n), dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(coeff).reshape(-1)
    cdef Py_ssize_t m, base
    cdef double g00, g01, g10, g11
    for m in range(n):
        base = 16 * m
        g00 = grad[0, 0, m]
        g01 = grad[0, 1, m]
        g10 = grad[1, 0, m]
        g11 = grad[1, 1, m]
        out[0, 0, m] = (c[base] * g00 + c[base + 1] * g01
                        + c[base + 2] * g10 + c[base + 3] * g11)
        out[0, 1, m] = (c[base + 4] * g00 + c[base + 5] * g01
                        + c[base + 6] * g10 + c[base + 7] * g11)
        out[1, 0, m] = (c[base + 8] * g00 + c[base + 9] * g01
                        + c[base + 10] * g10 + c[base + 11] * g11)
        out[1, 1, m] = (c[base + 12] * g00 + c[base + 13] * g01
                        + c[base + 14] * g10 + c[base + 15] * g11)
    return out


def matvec22(cnp.ndarray[double, ndim=3] mat not None,
             cnp.ndarray[double, ndim=2] vec not None):
    """out[i, n] = sum_j mat[i, j, n] * vec[j, n]."""
    cdef Py_ssize_t n = vec.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((2, n), dtype=np.float64)
    cdef Py_ssize_t m
    cdef double v0, v1
    for m in range(n):
        v0 = vec[0, m]
        v1 = vec[1, m]
        out[0, m] = mat[0, 0, m] * v0 + mat[0, 1, m] * v1
        out[1, m] = mat[1, 0, m] * v0 + mat[1, 1, m] * v1
    return out


def mattvec22(cnp.ndarray[double, ndim=3] mat not None,
              cnp.ndarray[double, ndim=2] vec not None):
    """Transpose apply: out[j, n] = sum_i mat[i, j, n] * vec[i, n]."""
    cdef Py_ssize_t n = vec.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((2, n), dtype=np.float64)
    cdef Py_ssize_t m
    cdef double v0, v1
    for m in range(n):
        v0 = vec[0, m]
        v1 = vec[1, m]
        out[0, m] = mat[0, 0, m] * v0 + mat[1, 0, m] * v1
        out[1, m] = mat[0, 1, m] * v0 + mat[1, 1, m] * v1
    return out
