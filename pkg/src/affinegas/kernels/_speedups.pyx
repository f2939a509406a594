# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled grid kernels: 4th-order stencils and pointwise 3x3 kinematics.

Mirrors ``numpy_backend`` exactly; parity is enforced by tests.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

NAME = "cython"


def partial4(cnp.ndarray f, int axis, double dx):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] a = np.ascontiguousarray(f, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros_like(a)
    cdef Py_ssize_t n0 = a.shape[0], n1 = a.shape[1], n2 = a.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double c = 1.0 / (12.0 * dx)
    cdef double vm2, vm1, vp1, vp2
    if axis == 0:
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    vm2 = a[i - 2, j, k] if i >= 2 else 0.0
                    vm1 = a[i - 1, j, k] if i >= 1 else 0.0
                    vp1 = a[i + 1, j, k] if i + 1 < n0 else 0.0
                    vp2 = a[i + 2, j, k] if i + 2 < n0 else 0.0
                    out[i, j, k] = c * (vm2 - 8.0 * vm1 + 8.0 * vp1 - vp2)
    elif axis == 1:
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    vm2 = a[i, j - 2, k] if j >= 2 else 0.0
                    vm1 = a[i, j - 1, k] if j >= 1 else 0.0
                    vp1 = a[i, j + 1, k] if j + 1 < n1 else 0.0
                    vp2 = a[i, j + 2, k] if j + 2 < n1 else 0.0
                    out[i, j, k] = c * (vm2 - 8.0 * vm1 + 8.0 * vp1 - vp2)
    elif axis == 2:
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    vm2 = a[i, j, k - 2] if k >= 2 else 0.0
                    vm1 = a[i, j, k - 1] if k >= 1 else 0.0
                    vp1 = a[i, j, k + 1] if k + 1 < n2 else 0.0
                    vp2 = a[i, j, k + 2] if k + 2 < n2 else 0.0
                    out[i, j, k] = c * (vm2 - 8.0 * vm1 + 8.0 * vp1 - vp2)
    else:
        raise ValueError("axis must be 0, 1 or 2")
    return out


def inv_det3_field(cnp.ndarray d):
    shape = d.shape
    cdef cnp.ndarray[cnp.float64_t, ndim=2] m = np.ascontiguousarray(
        d, dtype=np.float64).reshape(9, -1)
    cdef Py_ssize_t npts = m.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] inv = np.empty((9, npts), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] det = np.empty(npts, dtype=np.float64)
    cdef Py_ssize_t p
    cdef double a, b, c, e, f, g, h, i, j, dt, r
    for p in range(npts):
        a = m[0, p]; b = m[1, p]; c = m[2, p]
        e = m[3, p]; f = m[4, p]; g = m[5, p]
        h = m[6, p]; i = m[7, p]; j = m[8, p]
        dt = a * (f * j - g * i) - b * (e * j - g * h) + c * (e * i - f * h)
        det[p] = dt
        r = 1.0 / dt if dt != 0.0 else 0.0
        inv[0, p] = (f * j - g * i) * r
        inv[1, p] = (c * i - b * j) * r
        inv[2, p] = (b * g - c * f) * r
        inv[3, p] = (g * h - e * j) * r
        inv[4, p] = (a * j - c * h) * r
        inv[5, p] = (c * e - a * g) * r
        inv[6, p] = (e * i - f * h) * r
        inv[7, p] = (b * h - a * i) * r
        inv[8, p] = (a * f - b * e) * r
    grid_shape = tuple(shape[x] for x in range(2, d.ndim))
    return inv.reshape((3, 3) + grid_shape), det.reshape(grid_shape)
