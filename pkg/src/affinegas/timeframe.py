"""Change of time variable t <-> tau with d(tau)/dt = 1/mu, and the exponent set.

tau compresses the algebraic expansion of the background into an exponential
clock: mu(tau) grows like exp(mu1*tau) with mu1 the limit of mu_tau/mu.  The
decay-rate exponents (sigma, delta, mu0, mu1) are bundled into ExponentSet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine import AffineParams, AffineTrajectory, asymptotic_fit, integrate_affine
from .errors import OutOfRange, QuadratureFailure, SigmaOutOfRange
from .tensor import det3

_SIMPSON_TOL = 1e-10
_MAX_DEPTH = 40


def _adaptive_simpson(f, a, b, tol):
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth >= _MAX_DEPTH:
            raise QuadratureFailure("adaptive Simpson recursion limit")
        if abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2.0, depth + 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2.0, depth + 1
        )

    return recurse(a, b, fa, fm, fb, whole, tol, 0)


@dataclass
class TimeRescaling:
    """Monotone map tau(t) = integral_0^t ds/mu(s) along a trajectory."""

    traj: AffineTrajectory
    t_nodes: np.ndarray
    tau_nodes: np.ndarray

    @property
    def tau_end(self) -> float:
        return float(self.tau_nodes[-1])

    def _mu(self, t: float) -> float:
        a, _ = self.traj.eval(t)
        return det3(a) ** (1.0 / 3.0)

    def _mu_t(self, t: float) -> float:
        # Jacobi's formula: mu_t = (mu/3) tr(A' A^-1)
        a, ad = self.traj.eval(t)
        d = det3(a)
        mu = d ** (1.0 / 3.0)
        return mu / 3.0 * float(np.trace(ad @ np.linalg.inv(a)))

    def tau_of_t(self, t: float) -> float:
        if t < 0.0 or t > self.t_nodes[-1] * (1 + 1e-12):
            raise OutOfRange(f"t={t} outside integrated range")
        k = min(
            max(int(np.searchsorted(self.t_nodes, t, side="right")) - 1, 0),
            len(self.t_nodes) - 2,
        )
        t0 = self.t_nodes[k]
        if t == t0:
            return float(self.tau_nodes[k])
        extra = _adaptive_simpson(
            lambda s: 1.0 / self._mu(s), t0, t, _SIMPSON_TOL * max(1.0, t - t0)
        )
        return float(self.tau_nodes[k] + extra)

    def t_of_tau(self, tau: float) -> float:
        if tau < 0.0 or tau > self.tau_end * (1 + 1e-12):
            raise OutOfRange(f"tau={tau} outside [0, {self.tau_end}]")
        k = min(
            max(int(np.searchsorted(self.tau_nodes, tau, side="right")) - 1, 0),
            len(self.tau_nodes) - 2,
        )
        # Newton on tau(t) - tau = 0 with d(tau)/dt = 1/mu, bracketed by the node interval
        lo, hi = float(self.t_nodes[k]), float(self.t_nodes[k + 1])
        t = lo + (tau - self.tau_nodes[k]) / max(
            self.tau_nodes[k + 1] - self.tau_nodes[k], 1e-300
        ) * (hi - lo)
        for _ in range(60):
            resid = self.tau_of_t(t) - tau
            if abs(resid) <= 1e-12 * max(1.0, tau):
                break
            step = -resid * self._mu(t)
            t_new = t + step
            if not lo <= t_new <= hi:
                t_new = 0.5 * (lo + hi)
            if resid > 0:
                hi = t
            else:
                lo = t
            t = t_new
        return float(t)

    def mu_of_tau(self, tau: float) -> float:
        return self._mu(self.t_of_tau(tau))

    def mu_tau_of_tau(self, tau: float) -> float:
        """mu_tau = mu_t * mu (chain rule through dt/dtau = mu)."""
        t = self.t_of_tau(tau)
        return self._mu_t(t) * self._mu(t)


def build_rescaling(traj: AffineTrajectory) -> TimeRescaling:
    """Accumulate tau over the trajectory nodes by adaptive Simpson."""
    ts = traj.ts
    taus = np.zeros_like(ts)
    for k in range(len(ts) - 1):
        seg = _adaptive_simpson(
            lambda s: 1.0 / (det3(traj.eval(s)[0]) ** (1.0 / 3.0)),
            float(ts[k]),
            float(ts[k + 1]),
            _SIMPSON_TOL * max(1.0, float(ts[k + 1] - ts[k])),
        )
        taus[k + 1] = taus[k] + seg
    return TimeRescaling(traj=traj, t_nodes=ts.copy(), tau_nodes=taus)


def trajectory_spanning_tau(
    params: AffineParams, tau_end: float, rel_tol: float = 1e-10
) -> tuple[AffineTrajectory, TimeRescaling]:
    """Integrate far enough in t that the rescaled clock reaches tau_end.

    The required horizon grows exponentially with tau_end, so t_end is
    extended geometrically until tau(t_end) >= tau_end.
    """
    t_end = max(10.0, tau_end)
    for _ in range(40):
        traj = integrate_affine(params, t_end, rel_tol=rel_tol)
        if traj.status == "collapsed":
            return traj, build_rescaling(traj)
        resc = build_rescaling(traj)
        if resc.tau_end >= tau_end:
            return traj, resc
        t_end *= 4.0
    raise QuadratureFailure(f"could not reach tau={tau_end} (tau({t_end/4})={resc.tau_end})")


def estimate_mu1(traj: AffineTrajectory, rescaling: TimeRescaling) -> tuple[float, bool]:
    """Estimate mu1 = lim mu_tau/mu, flagging pre-asymptotic trajectories.

    Primary estimate: (det A1)^(1/3) from the linear-expansion fit; it is
    cross-checked against the measured ratio mu_tau/mu at the final node.
    A discrepancy above 5% (or a trajectory too short to fit) flags the run
    as pre-asymptotic and falls back to the measured ratio.
    """
    tau_end = rescaling.tau_end
    measured = rescaling.mu_tau_of_tau(tau_end) / rescaling.mu_of_tau(tau_end)
    if traj.t_end < 100.0:
        return measured, True
    fitted = asymptotic_fit(traj).mu1_est
    if fitted <= 0.0:
        return measured, True
    pre_asymptotic = abs(fitted - measured) > 0.05 * fitted
    return fitted, pre_asymptotic


@dataclass(frozen=True)
class ExponentSet:
    """Decay-rate parameters: 0 < sigma < min(3/alpha, 2), delta = 3/alpha - sigma,
    mu0 = (sigma/2) * mu1."""

    sigma: float
    delta: float
    mu1: float
    mu0: float
    alpha: float


def default_sigma(alpha: float) -> float:
    """Midpoint of the admissible interval (0, min(3/alpha, 2))."""
    return 0.5 * min(3.0 / alpha, 2.0)


def exponents(alpha: float, sigma_choice: float, mu1: float) -> ExponentSet:
    hi = min(3.0 / alpha, 2.0)
    if not 0.0 < sigma_choice < hi:
        raise SigmaOutOfRange(f"sigma={sigma_choice} outside (0, {hi})")
    if not mu1 > 0.0:
        raise ValueError("mu1 must be positive")
    delta = 3.0 / alpha - sigma_choice
    return ExponentSet(
        sigma=sigma_choice,
        delta=delta,
        mu1=mu1,
        mu0=0.5 * sigma_choice * mu1,
        alpha=alpha,
    )
