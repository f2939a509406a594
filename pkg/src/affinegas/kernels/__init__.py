"""Grid-kernel backend selection.

The hot kernels (stencil derivatives, pointwise 3x3 kinematics) exist in
two interchangeable implementations: a compiled Cython extension and a
pure-NumPy fallback.  The compiled one is picked automatically when the
extension was built; ``AFFINEGAS_BACKEND=numpy|cython`` forces a choice.
Composed operators (gradients of vector fields, norm bounds) are built on
top of the selected primitives and shared by both backends.
"""

from __future__ import annotations

import os

import numpy as np

from . import numpy_backend

_requested = os.environ.get("AFFINEGAS_BACKEND", "").strip().lower()
_impl = numpy_backend
if _requested != "numpy":
    try:
        from . import _speedups

        _impl = _speedups
    except ImportError:
        if _requested == "cython":
            raise RuntimeError(
                "AFFINEGAS_BACKEND=cython but the compiled extension is not available"
            )

partial4 = _impl.partial4
inv_det3_field = _impl.inv_det3_field


def backend_name() -> str:
    return _impl.NAME


def grad_scalar(f: np.ndarray, dx: float) -> np.ndarray:
    """Gradient of a scalar field, shape (3, n, n, n)."""
    return np.stack([partial4(f, ax, dx) for ax in range(3)])


def grad_vector(f: np.ndarray, dx: float) -> np.ndarray:
    """Jacobian of a vector field: out[i, j] = d f_i / d y_j."""
    return np.stack([grad_scalar(f[i], dx) for i in range(3)])


def spectral_bound_field(m: np.ndarray) -> np.ndarray:
    """Pointwise upper bound on the 2-norm: sqrt(||M||_1 ||M||_inf)."""
    am = np.abs(m)
    col = am.sum(axis=0).max(axis=0)
    row = am.sum(axis=1).max(axis=0)
    return np.sqrt(col * row)
