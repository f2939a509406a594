"""Pure-NumPy implementations of the hot grid kernels.

Fields are C-contiguous float64 arrays on an n^3 grid.  Stencils use
zero extension beyond the array bounds, which is exact for fields that
vanish near the boundary (the propagation-containment invariant).
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _shift(f: np.ndarray, axis: int, s: int) -> np.ndarray:
    # f shifted so that out[i] = f[i + s], zero-filled out of range
    if s == 0:
        return f
    out = np.zeros_like(f)
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    if s > 0:
        src[axis] = slice(s, None)
        dst[axis] = slice(None, -s)
    else:
        src[axis] = slice(None, s)
        dst[axis] = slice(-s, None)
    out[tuple(dst)] = f[tuple(src)]
    return out


def partial4(f: np.ndarray, axis: int, dx: float) -> np.ndarray:
    """4th-order centered first derivative along ``axis``."""
    c = 1.0 / (12.0 * dx)
    return c * (
        _shift(f, axis, -2)
        - 8.0 * _shift(f, axis, -1)
        + 8.0 * _shift(f, axis, 1)
        - _shift(f, axis, 2)
    )


def inv_det3_field(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise inverse and determinant of a (3, 3, ...) matrix field.

    The caller is responsible for validating positivity of the returned
    determinant before trusting the inverse.
    """
    a, b, c = d[0]
    e, f, g = d[1]
    h, i, j = d[2]
    det = a * (f * j - g * i) - b * (e * j - g * h) + c * (e * i - f * h)
    inv = np.empty_like(d)
    inv[0, 0] = f * j - g * i
    inv[0, 1] = c * i - b * j
    inv[0, 2] = b * g - c * f
    inv[1, 0] = g * h - e * j
    inv[1, 1] = a * j - c * h
    inv[1, 2] = c * e - a * g
    inv[2, 0] = e * i - f * h
    inv[2, 1] = b * h - a * i
    inv[2, 2] = a * f - b * e
    with np.errstate(divide="ignore", invalid="ignore"):
        inv /= det
    return inv, det
