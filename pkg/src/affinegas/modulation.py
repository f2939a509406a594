"""Per-tau geometry of the background: the SL(3) shape matrix and its motion.

Lambda = (det A)^(2/3) A^-1 A^-T is symmetric positive definite with unit
determinant; its eigenframe (P, d_i) and the rotation-rate matrix
GammaStar = O^-1 O_tau (A = mu*O) drive the perturbation equation.  Bound
monitors check that Lambda stays uniformly conditioned while its tau
derivatives decay exponentially at rate mu1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientFrames
from .tensor import SymEig3, det3, sym_eig3
from .timeframe import ExponentSet, TimeRescaling

__all__ = ["ModulationFrame", "FrameTrack", "frame_at", "verify_frame_bounds", "BoundReport"]


@dataclass
class ModulationFrame:
    tau: float
    mu: float
    mu_tau: float
    Lambda: np.ndarray
    LambdaInv: np.ndarray
    LambdaTau: np.ndarray
    eig: SymEig3
    GammaStar: np.ndarray
    O: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return self.eig.rotation

    @property
    def d(self) -> np.ndarray:
        return self.eig.eigenvalues


def _lambda_of(a: np.ndarray) -> np.ndarray:
    d = det3(a)
    inv = np.linalg.inv(a)
    lam = d ** (2.0 / 3.0) * inv @ inv.T
    return 0.5 * (lam + lam.T)


def _align_eig(eig: SymEig3, ref: SymEig3 | None) -> SymEig3:
    """Fix eigenvector branch by maximal overlap with a reference frame.

    Keeps (P, d) continuous in tau so that finite differences of the
    eigendata are meaningful.  Rows are permuted to the best-overlap order
    only when eigenvalues are close enough to have swapped; sign flips are
    always resolved.
    """
    if ref is None:
        return eig
    p, d = eig.rotation.copy(), eig.eigenvalues.copy()
    overlap = np.abs(p @ ref.rotation.T)  # overlap[i, j] = |<row_i, ref_j>|
    order = []
    taken = set()
    for j in range(3):
        cand = sorted(range(3), key=lambda i: -overlap[i, j])
        pick = next(i for i in cand if i not in taken)
        taken.add(pick)
        order.append(pick)
    p, d = p[order], d[order]
    for r in range(3):
        if np.dot(p[r], ref.rotation[r]) < 0:
            p[r] *= -1.0
    return SymEig3(rotation=p, eigenvalues=d)


def frame_at(
    tau: float,
    traj,
    rescaling: TimeRescaling,
    prev: ModulationFrame | None = None,
    fd_scale: float = 1e-4,
) -> ModulationFrame:
    """Assemble the modulation frame at one tau instant.

    LambdaTau comes from centered differencing of Lambda(tau) with step
    h = fd_scale * max(1, tau), refined once by Richardson extrapolation.
    """
    t = rescaling.t_of_tau(tau)
    a, adot = traj.eval(t)
    mu = det3(a) ** (1.0 / 3.0)
    mu_tau = rescaling.mu_tau_of_tau(tau)
    lam = _lambda_of(a)
    eig = _align_eig(sym_eig3(lam), prev.eig if prev is not None else None)

    def lam_at(tt: float) -> np.ndarray:
        return _lambda_of(traj.eval(rescaling.t_of_tau(tt))[0])

    h = fd_scale * max(1.0, tau)
    if tau - h < 0.0 or tau + h > rescaling.tau_end:
        # one-sided fallback at the very ends of the integrated range
        h2 = min(fd_scale, 0.5 * rescaling.tau_end)
        lo, hi = max(tau - h2, 0.0), min(tau + h2, rescaling.tau_end)
        lam_tau = (lam_at(hi) - lam_at(lo)) / (hi - lo)
    else:
        d1 = (lam_at(tau + h) - lam_at(tau - h)) / (2.0 * h)
        d2 = (lam_at(tau + 0.5 * h) - lam_at(tau - 0.5 * h)) / h
        lam_tau = (4.0 * d2 - d1) / 3.0

    o = a / mu
    mu_t = mu_tau / mu  # since d/dtau = mu d/dt
    gamma_star = mu * np.linalg.inv(a) @ adot - mu_t * np.eye(3)

    return ModulationFrame(
        tau=tau,
        mu=mu,
        mu_tau=mu_tau,
        Lambda=lam,
        LambdaInv=np.linalg.inv(lam),
        LambdaTau=lam_tau,
        eig=eig,
        GammaStar=gamma_star,
        O=o,
    )


class FrameTrack:
    """Frame factory that preserves eigenframe continuity across calls."""

    def __init__(self, traj, rescaling: TimeRescaling):
        self.traj = traj
        self.rescaling = rescaling
        self._prev: ModulationFrame | None = None

    def at(self, tau: float) -> ModulationFrame:
        frame = frame_at(tau, self.traj, self.rescaling, prev=self._prev)
        self._prev = frame
        return frame


def _log_slope(taus: np.ndarray, vals: np.ndarray) -> float:
    mask = vals > 0
    if mask.sum() < 2:
        return 0.0
    return float(np.polyfit(taus[mask], np.log(vals[mask]), 1)[0])


@dataclass
class BoundReport:
    """Best constants and decay fits for the frame-bound monitors."""

    lambda_norm_const: float       # max ||Lambda|| + ||Lambda^-1||
    eigen_sum_const: float         # max sum(d_i + 1/d_i)
    lambda_tau_rate: float         # log-slope of ||Lambda_tau||
    eigen_rate: float              # log-slope of sum|d_i'| + ||P'||
    quad_lo: float                 # min over frames of 1/d_max
    quad_hi: float                 # max over frames of 1/d_min
    decay_ok: bool                 # both rates <= -0.75 * mu1 (or decay items vanish)

    def rows(self):
        return [
            ("lambda_norm_const", self.lambda_norm_const),
            ("eigen_sum_const", self.eigen_sum_const),
            ("lambda_tau_rate", self.lambda_tau_rate),
            ("eigen_rate", self.eigen_rate),
            ("quad_lo", self.quad_lo),
            ("quad_hi", self.quad_hi),
            ("decay_ok", float(self.decay_ok)),
        ]


def verify_frame_bounds(
    frames: list[ModulationFrame],
    exps: ExponentSet,
    fit_tau_min: float = 2.0,
) -> BoundReport:
    """Evaluate the uniform and exponential-decay frame bounds.

    Needs at least 10 frames spanning a decade of tau.  The decay fits use
    frames with tau >= fit_tau_min to avoid the pre-asymptotic transient.
    """
    if len(frames) < 10:
        raise InsufficientFrames(f"{len(frames)} frames < 10")
    taus = np.array([f.tau for f in frames])
    pos = taus[taus > 0]
    if len(pos) == 0 or pos.max() < 10.0 * pos.min():
        raise InsufficientFrames("frames must span a decade of tau")

    lam_norm = np.array(
        [np.linalg.norm(f.Lambda) + np.linalg.norm(f.LambdaInv) for f in frames]
    )
    eig_sum = np.array([np.sum(f.d + 1.0 / f.d) for f in frames])
    lam_tau = np.array([np.linalg.norm(f.LambdaTau) for f in frames])

    # eigen-motion by adjacent-frame differencing (frames are continuity-aligned)
    dmid, dvals = [], []
    for a, b in zip(frames[:-1], frames[1:]):
        dt = b.tau - a.tau
        if dt <= 0:
            continue
        dd = np.sum(np.abs(b.d - a.d)) / dt
        dp = np.linalg.norm(b.P - a.P) / dt
        dmid.append(0.5 * (a.tau + b.tau))
        dvals.append(dd + dp)
    dmid, dvals = np.array(dmid), np.array(dvals)

    window = taus >= fit_tau_min
    dwindow = dmid >= fit_tau_min
    lam_tau_rate = _log_slope(taus[window], lam_tau[window]) if window.sum() >= 2 else 0.0
    eig_rate = _log_slope(dmid[dwindow], dvals[dwindow]) if dwindow.sum() >= 2 else 0.0

    # frozen/isotropic runs have identically vanishing decay items
    lam_tau_flat = np.max(lam_tau) <= 1e-12
    eig_flat = len(dvals) == 0 or np.max(dvals) <= 1e-12
    target = -0.75 * exps.mu1
    decay_ok = (lam_tau_flat or lam_tau_rate <= target) and (eig_flat or eig_rate <= target)

    d_last = frames[-1].d
    return BoundReport(
        lambda_norm_const=float(np.max(lam_norm)),
        eigen_sum_const=float(np.max(eig_sum)),
        lambda_tau_rate=lam_tau_rate,
        eigen_rate=eig_rate,
        quad_lo=float(1.0 / np.max(d_last)),
        quad_hi=float(1.0 / np.min(d_last)),
        decay_ok=decay_ok,
    )


def frames_to_csv(frames: list[ModulationFrame], path) -> None:
    header = ["tau", "mu", "d1", "d2", "d3", "normLambdaTau", "normGammaStar"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for f in frames:
            row = [
                f.tau,
                f.mu,
                f.d[0],
                f.d[1],
                f.d[2],
                float(np.linalg.norm(f.LambdaTau)),
                float(np.linalg.norm(f.GammaStar)),
            ]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
