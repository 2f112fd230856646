# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled pointwise quaternion kernels.

Hot inner loops of the gauge continuation apply these to flattened
(M, 4) component tables.  The numpy fallback in ``quat_kernels`` computes
identical values; tests assert agreement.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt

cnp.import_array()


def mul(cnp.ndarray[cnp.float64_t, ndim=2] a,
        cnp.ndarray[cnp.float64_t, ndim=2] b,
        cnp.ndarray[cnp.float64_t, ndim=2] out):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t t
    cdef double a0, a1, a2, a3, b0, b1, b2, b3
    for t in range(m):
        a0 = a[t, 0]; a1 = a[t, 1]; a2 = a[t, 2]; a3 = a[t, 3]
        b0 = b[t, 0]; b1 = b[t, 1]; b2 = b[t, 2]; b3 = b[t, 3]
        out[t, 0] = a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3
        out[t, 1] = a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2
        out[t, 2] = a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1
        out[t, 3] = a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0
    return out


def conj(cnp.ndarray[cnp.float64_t, ndim=2] a,
         cnp.ndarray[cnp.float64_t, ndim=2] out):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t t
    for t in range(m):
        out[t, 0] = a[t, 0]
        out[t, 1] = -a[t, 1]
        out[t, 2] = -a[t, 2]
        out[t, 3] = -a[t, 3]
    return out


def inv(cnp.ndarray[cnp.float64_t, ndim=2] a,
        cnp.ndarray[cnp.float64_t, ndim=2] out):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t t
    cdef double n2
    for t in range(m):
        n2 = a[t, 0] * a[t, 0] + a[t, 1] * a[t, 1] \
            + a[t, 2] * a[t, 2] + a[t, 3] * a[t, 3]
        out[t, 0] = a[t, 0] / n2
        out[t, 1] = -a[t, 1] / n2
        out[t, 2] = -a[t, 2] / n2
        out[t, 3] = -a[t, 3] / n2
    return out


def exp_pure(cnp.ndarray[cnp.float64_t, ndim=2] u,
             cnp.ndarray[cnp.float64_t, ndim=2] out):
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t t
    cdef double th, s
    for t in range(m):
        th = sqrt(u[t, 1] * u[t, 1] + u[t, 2] * u[t, 2] + u[t, 3] * u[t, 3])
        if th < 1e-300:
            s = 1.0
        else:
            s = sin(th) / th
        out[t, 0] = cos(th)
        out[t, 1] = s * u[t, 1]
        out[t, 2] = s * u[t, 2]
        out[t, 3] = s * u[t, 3]
    return out


def normalize(cnp.ndarray[cnp.float64_t, ndim=2] a,
              cnp.ndarray[cnp.float64_t, ndim=2] out):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t t
    cdef double n
    for t in range(m):
        n = sqrt(a[t, 0] * a[t, 0] + a[t, 1] * a[t, 1]
                 + a[t, 2] * a[t, 2] + a[t, 3] * a[t, 3])
        out[t, 0] = a[t, 0] / n
        out[t, 1] = a[t, 1] / n
        out[t, 2] = a[t, 2] / n
        out[t, 3] = a[t, 3] / n
    return out
