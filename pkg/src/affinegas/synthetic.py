"""Seed-deterministic synthetic fields for the identity suites.

The fields are defined analytically (band-limited trigonometric content
under a smooth compactly supported envelope), so the same seed produces the
same function on every grid resolution; that is what makes the convergence
ratios of the identity residuals meaningful.
"""

from __future__ import annotations

import numpy as np

from .fields import FlowState, Grid3, poly_bump_field
from .modulation import ModulationFrame, _align_eig
from .tensor import sym_eig3

SYNTH_RADIUS = 1.5


def _coeffs(seed: int):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1.0, 1.0, size=(3, 2))
    k = rng.uniform(0.5, 2.0, size=(2, 3))
    omega = rng.uniform(0.5, 1.5, size=2)
    phase = rng.uniform(0.0, 2 * np.pi, size=(3, 2))
    return c, k, omega, phase


def synthetic_theta(
    grid: Grid3, seed: int, amp: float, tau: float
) -> tuple[np.ndarray, np.ndarray]:
    """Smooth compactly supported theta(tau, y) and its analytic tau derivative."""
    b, _ = poly_bump_field(grid, r0=SYNTH_RADIUS)
    c, k, omega, phase = _coeffs(seed)
    theta = np.zeros((3,) + b.shape)
    dtheta_dtau = np.zeros_like(theta)
    for m in range(2):
        ky = np.einsum("a,a...->...", k[m], grid.coords)
        for i in range(3):
            arg = ky + omega[m] * tau + phase[i, m]
            theta[i] += amp * c[i, m] * b * np.cos(arg)
            dtheta_dtau[i] += -amp * c[i, m] * omega[m] * b * np.sin(arg)
    return theta, dtheta_dtau


def synthetic_state_pair(
    grid: Grid3, seed: int, amp: float, dtau: float, tau0: float = 0.3
) -> tuple[FlowState, FlowState]:
    """Two adjacent snapshots of the synthetic field, dtau apart."""
    states = []
    for tau in (tau0 - 0.5 * dtau, tau0 + 0.5 * dtau):
        theta, v = synthetic_theta(grid, seed, amp, tau)
        states.append(FlowState(tau=tau, theta=theta, V=v, grid=grid))
    return states[0], states[1]


def _synthetic_lambda(seed: int, tau: float) -> np.ndarray:
    rng = np.random.default_rng(seed + 7)
    s_a = rng.uniform(-0.3, 0.3, size=(3, 3))
    s_b = rng.uniform(-0.3, 0.3, size=(3, 3))
    s_a = 0.5 * (s_a + s_a.T)
    s_b = 0.5 * (s_b + s_b.T)
    w_a, w_b = rng.uniform(0.5, 1.5, size=2)
    s = s_a * np.cos(w_a * tau) + s_b * np.sin(w_b * tau)
    lam = np.eye(3) + 0.4 * s + 0.3 * s @ s
    lam = 0.5 * (lam + lam.T)
    return lam / np.linalg.det(lam) ** (1.0 / 3.0)


def synthetic_frame_pair(
    seed: int, tau1: float, tau2: float
) -> tuple[ModulationFrame, ModulationFrame]:
    """Two tau instants of a smooth unit-determinant shape matrix."""
    frames = []
    prev_eig = None
    for tau in (tau1, tau2):
        lam = _synthetic_lambda(seed, tau)
        eig = _align_eig(sym_eig3(lam), prev_eig)
        prev_eig = eig
        frames.append(
            ModulationFrame(
                tau=tau,
                mu=1.0,
                mu_tau=0.0,
                Lambda=lam,
                LambdaInv=np.linalg.inv(lam),
                LambdaTau=np.zeros((3, 3)),
                eig=eig,
                GammaStar=np.zeros((3, 3)),
                O=np.eye(3),
            )
        )
    return frames[0], frames[1]
