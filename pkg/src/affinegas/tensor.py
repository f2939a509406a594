"""Dependency-light 3x3 matrix and 3-vector kernels.

Everything downstream (matrix ODE, modulation geometry, grid kinematics)
is built on the handful of operations here.  Matrices are plain float64
``numpy`` arrays of shape (3, 3); vectors are shape (3,).  All functions
are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDeterminant, NotPositiveDefinite, NotSymmetric, SingularMatrix

# Relative singularity threshold.  det(M) scales like the cube of the matrix
# norm, so the cutoff is taken relative to ||M||_F^3 to behave uniformly
# across dilation scales.
DET_EPS_REL = 1e-13

_SYM_TOL = 1e-10
_JACOBI_SWEEPS = 30
_JACOBI_OFF_TOL = 1e-14


def det3(m: np.ndarray) -> float:
    """Determinant by cofactor expansion along the first row."""
    return float(
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def _adjugate(m: np.ndarray) -> np.ndarray:
    adj = np.empty((3, 3))
    adj[0, 0] = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    adj[0, 1] = m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]
    adj[0, 2] = m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]
    adj[1, 0] = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    adj[1, 1] = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    adj[1, 2] = m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]
    adj[2, 0] = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    adj[2, 1] = m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]
    adj[2, 2] = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return adj


def mat3_kinematics(m: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Return (det, inverse, cofactor) of a 3x3 matrix.

    The cofactor matrix satisfies ``cof = det * inverse.T`` and is the
    quantity whose rows are divergence-free for Jacobian fields (Piola).

    Raises:
        SingularMatrix: if ``|det|`` falls below the relative threshold.
    """
    d = det3(m)
    scale = float(np.linalg.norm(m)) ** 3
    if abs(d) <= DET_EPS_REL * max(scale, 1e-300):
        raise SingularMatrix(f"determinant {d:.3e} below threshold for scale {scale:.3e}")
    adj = _adjugate(m)
    inv = adj / d
    return d, inv, d * inv.T


@dataclass(frozen=True)
class SymEig3:
    """Eigendecomposition S = rotation.T @ diag(eigenvalues) @ rotation.

    ``rotation`` is a proper rotation (det = +1); ``eigenvalues`` are sorted
    in descending order and strictly positive.
    """

    rotation: np.ndarray
    eigenvalues: np.ndarray

    def reconstruct(self) -> np.ndarray:
        p = self.rotation
        return p.T @ np.diag(self.eigenvalues) @ p


def sym_eig3(s: np.ndarray) -> SymEig3:
    """Diagonalize a symmetric positive definite 3x3 matrix.

    Uses cyclic Jacobi rotations (at most 30 sweeps, off-diagonal tolerance
    1e-14 relative to the Frobenius norm); robust and solver-free for the
    3x3 case.

    Raises:
        NotSymmetric: asymmetry beyond 1e-10 relative to scale.
        NotPositiveDefinite: any eigenvalue not strictly positive.
    """
    scale = max(float(np.max(np.abs(s))), 1.0)
    if float(np.max(np.abs(s - s.T))) > _SYM_TOL * scale:
        raise NotSymmetric("input is not symmetric within tolerance")

    a = 0.5 * (s + s.T)
    norm = float(np.linalg.norm(a))
    v = np.eye(3)
    off_tol = _JACOBI_OFF_TOL * max(norm, 1e-300)
    for _ in range(_JACOBI_SWEEPS):
        off = math.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off <= off_tol:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if abs(apq) <= off_tol / 3.0:
                continue
            # classic Jacobi rotation annihilating a[p, q]
            theta = 0.5 * (a[q, q] - a[p, p]) / apq
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
            c = 1.0 / math.sqrt(1.0 + t * t)
            sn = t * c
            rot = np.eye(3)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = sn
            rot[q, p] = -sn
            a = rot.T @ a @ rot
            v = v @ rot
            a[p, q] = a[q, p] = 0.5 * (a[p, q] + a[q, p])

    eigvals = np.diag(a).copy()
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    p = v[:, order].T  # rows are eigenvectors: S = P.T diag P
    if eigvals[-1] <= 0.0:
        raise NotPositiveDefinite(f"eigenvalues {eigvals} not all positive")
    if det3(p) < 0.0:
        p = p.copy()
        p[2, :] *= -1.0
    return SymEig3(rotation=p, eigenvalues=eigvals)


def polar_split(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Split A = mu * O with mu = det(A)^(1/3) and det(O) = 1.

    Raises:
        NonPositiveDeterminant: if det(A) <= 0.
    """
    d = det3(a)
    if d <= 0.0:
        raise NonPositiveDeterminant(f"det = {d:.3e}")
    mu = d ** (1.0 / 3.0)
    return mu, a / mu
