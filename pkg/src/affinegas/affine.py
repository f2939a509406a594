"""Expanding-matrix ODE: integration, first integral, and asymptotics.

The motion of the background flow is governed by a second-order matrix ODE

    A'' = Cbar * det(A)^(-1/alpha) * A^(-T),      Cbar = Tbar * det(A0)^(1/alpha),

whose solutions expand with det A(t) growing like 1 + t^3.  This module
integrates the ODE with an embedded Runge-Kutta 5(4) pair (PI step-size
control, cubic-Hermite dense output), exposes the conserved energy

    E = 1/2 tr(A'^T A') + alpha * Cbar * det(A)^(-1/alpha),

and fits the large-time structure A = A0 + t*A1 + M(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDeterminant, TrajectoryTooShort
from .tensor import det3, mat3_kinematics

__all__ = [
    "AffineParams",
    "AffineTrajectory",
    "AsymptoticFit",
    "affine_rhs",
    "ode_energy",
    "integrate_affine",
    "asymptotic_fit",
]


@dataclass(frozen=True)
class AffineParams:
    """Initial data (A0, A0dot), background temperature and heat capacity."""

    A0: np.ndarray
    A0dot: np.ndarray
    Tbar: float
    alpha: float

    def __post_init__(self):
        a0 = np.asarray(self.A0, dtype=float)
        a0dot = np.asarray(self.A0dot, dtype=float)
        object.__setattr__(self, "A0", a0)
        object.__setattr__(self, "A0dot", a0dot)
        if not (np.all(np.isfinite(a0)) and np.all(np.isfinite(a0dot))):
            raise ValueError("non-finite initial matrices")
        if det3(a0) <= 0.0:
            raise NonPositiveDeterminant("det A0 must be positive")
        if not self.Tbar > 0.0:
            raise ValueError("Tbar must be positive")
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")

    @property
    def Cbar(self) -> float:
        return self.Tbar * det3(self.A0) ** (1.0 / self.alpha)


def affine_rhs(a: np.ndarray, params: AffineParams) -> np.ndarray:
    """Acceleration Cbar * det(A)^(-1/alpha) * A^(-T)."""
    d, inv, _ = mat3_kinematics(a)
    if d <= 0.0:
        raise NonPositiveDeterminant(f"det A = {d:.3e}")
    return params.Cbar * d ** (-1.0 / params.alpha) * inv.T


def ode_energy(a: np.ndarray, adot: np.ndarray, params: AffineParams) -> float:
    """Conserved first integral of the matrix ODE."""
    d = det3(a)
    if d <= 0.0:
        raise NonPositiveDeterminant(f"det A = {d:.3e}")
    kinetic = 0.5 * float(np.sum(adot * adot))
    return kinetic + params.alpha * params.Cbar * d ** (-1.0 / params.alpha)


@dataclass
class AffineTrajectory:
    """Sampled (A, A') with cubic-Hermite dense output between nodes.

    ``fs`` holds A'' at the nodes so both A and A' interpolate with C1
    accuracy.  ``status`` is "ok", "collapsed" (det A reached zero within
    the step-size budget; the trajectory is truncated, not an error), or
    "synthetic" for test-hook trajectories built from closed forms.
    """

    ts: np.ndarray
    As: np.ndarray
    Ads: np.ndarray
    fs: np.ndarray
    params: AffineParams | None = None
    status: str = "ok"
    detAs: np.ndarray = field(init=False)
    energies: np.ndarray = field(init=False)

    def __post_init__(self):
        self.detAs = np.array([det3(a) for a in self.As])
        if self.params is not None:
            self.energies = np.array(
                [ode_energy(a, ad, self.params) for a, ad in zip(self.As, self.Ads)]
            )
        else:
            self.energies = np.zeros_like(self.detAs)

    @property
    def t_end(self) -> float:
        return float(self.ts[-1])

    @classmethod
    def from_samples(
        cls,
        ts: np.ndarray,
        As: np.ndarray,
        Ads: np.ndarray,
        fs: np.ndarray | None = None,
        params: AffineParams | None = None,
    ) -> "AffineTrajectory":
        """Build a trajectory from externally supplied samples (test hook)."""
        ts = np.asarray(ts, dtype=float)
        As = np.asarray(As, dtype=float)
        Ads = np.asarray(Ads, dtype=float)
        if fs is None:
            fs = np.zeros_like(As)
        return cls(ts=ts, As=As, Ads=Ads, fs=np.asarray(fs, dtype=float),
                   params=params, status="synthetic")

    def _interval(self, t: float) -> int:
        if t < self.ts[0] - 1e-12 or t > self.ts[-1] * (1 + 1e-12) + 1e-12:
            from .errors import OutOfRange

            raise OutOfRange(f"t={t} outside [{self.ts[0]}, {self.ts[-1]}]")
        k = int(np.searchsorted(self.ts, t, side="right")) - 1
        return min(max(k, 0), len(self.ts) - 2)

    def eval(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Dense evaluation of (A(t), A'(t))."""
        k = self._interval(t)
        t0, t1 = self.ts[k], self.ts[k + 1]
        h = t1 - t0
        s = (t - t0) / h
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        a = (h00 * self.As[k] + h * h10 * self.Ads[k]
             + h01 * self.As[k + 1] + h * h11 * self.Ads[k + 1])
        ad = (h00 * self.Ads[k] + h * h10 * self.fs[k]
              + h01 * self.Ads[k + 1] + h * h11 * self.fs[k + 1])
        return a, ad

    def mu(self, t: float) -> float:
        a, _ = self.eval(t)
        return det3(a) ** (1.0 / 3.0)

    def energy_drift(self) -> float:
        """Max relative drift of the first integral over the stored nodes."""
        e0 = self.energies[0]
        return float(np.max(np.abs(self.energies - e0)) / abs(e0))

    def to_csv(self, path) -> None:
        header = (
            ["t"]
            + [f"A{i}{j}" for i in range(1, 4) for j in range(1, 4)]
            + [f"Ad{i}{j}" for i in range(1, 4) for j in range(1, 4)]
            + ["detA", "energy"]
        )
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for k in range(len(self.ts)):
                row = (
                    [self.ts[k]]
                    + list(self.As[k].ravel())
                    + list(self.Ads[k].ravel())
                    + [self.detAs[k], self.energies[k]]
                )
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


class _CollapseDetected(Exception):
    pass


def _pack_rhs(params: AffineParams):
    def rhs(y: np.ndarray) -> np.ndarray:
        a = y[:9].reshape(3, 3)
        if det3(a) <= 0.0:
            raise _CollapseDetected
        out = np.empty(18)
        out[:9] = y[9:]
        out[9:] = affine_rhs(a, params).ravel()
        return out

    return rhs


def integrate_affine(
    params: AffineParams,
    t_end: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
) -> AffineTrajectory:
    """Integrate the matrix ODE on [0, t_end].

    Collapse (det A -> 0 within the step-size budget) truncates the
    trajectory and sets status="collapsed" so parameter sweeps can map the
    expansion region without aborting.
    """
    if not t_end > 0.0:
        raise ValueError("t_end must be positive")
    if not 1e-12 <= rel_tol <= 1e-4:
        raise ValueError("rel_tol outside [1e-12, 1e-4]")

    rhs = _pack_rhs(params)
    y = np.concatenate([params.A0.ravel(), params.A0dot.ravel()])
    t = 0.0
    f = rhs(y)

    # initial step heuristic
    scale = abs_tol + rel_tol * np.abs(y)
    d0 = math.sqrt(float(np.mean((y / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((f / scale) ** 2)))
    h = 0.01 * d0 / d1 if d1 > 1e-10 else 1e-6
    h = min(h, t_end)
    h_max = t_end / 64.0

    ts, ys, frs = [0.0], [y.copy()], [f.copy()]
    err_prev = 1.0
    safety, fac_min, fac_max = 0.9, 0.2, 5.0
    collapsed = False

    while t < t_end and not collapsed:
        h = min(h, t_end - t, h_max)
        try:
            k = np.empty((7, 18))
            k[0] = f
            for i in range(1, 7):
                yi = y + h * (k[:i].T @ _A[i])
                k[i] = rhs(yi)
            y5 = y + h * (k.T @ _B5)
            y4 = y + h * (k.T @ _B4)
        except (_CollapseDetected, NonPositiveDeterminant):
            h *= 0.25
            if h < 1e-14 * max(1.0, t):
                collapsed = True
            continue

        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y5))
        err = math.sqrt(float(np.mean(((y5 - y4) / scale) ** 2)))
        if err <= 1.0:
            t += h
            y = y5
            f = k[6]  # FSAL
            ts.append(t)
            ys.append(y.copy())
            frs.append(f.copy())
            fac = safety * (err ** -0.14 if err > 0 else fac_max) * err_prev**0.08
            err_prev = max(err, 1e-10)
        else:
            fac = max(fac_min, safety * err**-0.2)
        h *= min(fac_max, max(fac_min, fac))
        if h < 1e-14 * max(1.0, t):
            collapsed = True

    ys_arr = np.array(ys)
    frs_arr = np.array(frs)
    return AffineTrajectory(
        ts=np.array(ts),
        As=ys_arr[:, :9].reshape(-1, 3, 3),
        Ads=ys_arr[:, 9:].reshape(-1, 3, 3),
        fs=frs_arr[:, 9:].reshape(-1, 3, 3),
        params=params,
        status="collapsed" if collapsed else "ok",
    )


@dataclass
class AsymptoticFit:
    """Large-time structure of the trajectory.

    ``M_decay_exponent`` is the log-log slope of ||A'(t) - A1|| against
    (1 + t); the expected value is -3/alpha.
    """

    A1_est: np.ndarray
    mu1_est: float
    ratio_series: np.ndarray  # columns (t, det A / (1 + t^3))
    M_decay_exponent: float


def asymptotic_fit(traj: AffineTrajectory) -> AsymptoticFit:
    """Estimate the linear-expansion matrix and derivative-decay rate.

    Requires t_end >= 100.  The decay fit window is [t_end/100, t_end/10]:
    late enough to be past the transient, early enough that A1 estimated at
    the final node does not contaminate the differences.
    """
    if traj.t_end < 100.0:
        raise TrajectoryTooShort(f"t_end={traj.t_end} < 100")

    a1_est = traj.eval(traj.t_end)[1]
    mu1_est = max(det3(a1_est), 0.0) ** (1.0 / 3.0)

    ratios = np.column_stack([traj.ts, traj.detAs / (1.0 + traj.ts**3)])

    t_lo, t_hi = traj.t_end / 100.0, traj.t_end / 10.0
    samples = np.geomspace(t_lo, t_hi, 25)
    diffs = []
    for t in samples:
        _, ad = traj.eval(float(t))
        diffs.append(np.linalg.norm(ad - a1_est))
    diffs = np.array(diffs)
    mask = diffs > 0
    slope = float(
        np.polyfit(np.log(1.0 + samples[mask]), np.log(diffs[mask]), 1)[0]
    ) if mask.sum() >= 2 else -np.inf

    return AsymptoticFit(
        A1_est=a1_est, mu1_est=mu1_est, ratio_series=ratios, M_decay_exponent=slope
    )
