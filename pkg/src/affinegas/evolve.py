"""Explicit tau-marching of the Lagrangian perturbation equation.

The equation is evolved in its expanded form, where division by the
Gaussian weight has been eliminated through w_k = -y_k w: every occurrence
of 1/w becomes a bounded y-factor on the propagation cone, so the scheme is
stable in the far tail.  Writing V = d(theta)/dtau, the acceleration is

    d(tau) V_i = -(mu_tau/mu) V_i - 2 G*_ij V_j
                 - Cbar mu^(-delta-sigma) [ Lambda theta
                   + Lambda div Phi - Lambda Phi^T y
                   + Lambda grad(beta) - beta Lambda y ]_i,

with Phi[k, j] = (1 + beta) (Ainv[k, j] J^(-1/alpha) - delta_kj).

Explicit RK4 is used: the damping and rotation terms break any symplectic
structure, so a general-purpose 4th-order scheme is the right tool.  The
step obeys dt = cfl * dx / c_max with c_max from the principal symbol of
the flux term (a 20% safety margin is folded into the default cfl).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .diagnostics import (
    SUPPORT_THRESHOLDS,
    identity_suite,
    norms_report,
    support_radius,
)
from .errors import AprioriViolated, CflFailure, ConfigInvalid
from .fields import FlowState, Grid3, WeightProfiles, boundary_shell_mask, build_profiles
from .ledger import RunLedger
from .modulation import FrameTrack, ModulationFrame
from .timeframe import ExponentSet, TimeRescaling, estimate_mu1, exponents

APRIORI_CAP = 1.0 / 3.0
DV_CAP = 10.0  # finite-but-unquantified caps on the velocity-gradient monitors


@dataclass
class EvolverConfig:
    tau_end: float
    grid: Grid3
    epsilon: float
    lam: float
    sigma_choice: float
    order: int = 2
    cfl: float = 0.4
    snapshot_stride: int = 4
    k_budget: float = 0.2
    dtau_max: float = 0.1

    def validate(self) -> None:
        if not self.tau_end > 0:
            raise ConfigInvalid("tau_end", "must be positive")
        if not 0 < self.cfl <= 1:
            raise ConfigInvalid("cfl", "must lie in (0, 1]")
        if self.order < 1:
            raise ConfigInvalid("order", "must be >= 1")
        if self.epsilon < 0 or self.lam < 0:
            raise ConfigInvalid("epsilon" if self.epsilon < 0 else "lambda",
                                "budgets must be nonnegative")
        if self.snapshot_stride < 1:
            raise ConfigInvalid("snapshot_stride", "must be >= 1")
        if not self.grid.containment_ok(self.tau_end, self.k_budget):
            raise ConfigInvalid(
                "grid",
                f"half_width {self.grid.half_width} < 1 + {self.k_budget}*"
                f"{self.tau_end} + 4*dx (propagation containment)",
            )


@dataclass
class StepDiagnostics:
    tau: float
    dt_tau: float
    max_wave_speed: float
    apriori_flags: dict


def _flux_matrix(
    ainv: np.ndarray, jdet: np.ndarray, beta: np.ndarray, alpha: float
) -> np.ndarray:
    phi = (ainv * jdet ** (-1.0 / alpha))
    for k in range(3):
        phi[k, k] -= 1.0
    phi *= 1.0 + beta
    return phi


def rhs_theta(
    state: FlowState,
    frame: ModulationFrame,
    profiles: WeightProfiles,
    exps: ExponentSet,
    cbar: float,
) -> np.ndarray:
    """Acceleration d^2(theta)/d(tau)^2 of the expanded perturbation equation."""
    grid = state.grid
    lam = frame.Lambda
    mu = frame.mu
    phi = _flux_matrix(state.Ainv, state.Jdet, profiles.beta, exps.alpha)

    div_phi = np.zeros_like(state.theta)
    for j in range(3):
        for k in range(3):
            div_phi[j] += kernels.partial4(phi[k, j], k, grid.dx)
    phi_t_y = np.einsum("kj...,k...->j...", phi, grid.coords)

    inner = state.theta + div_phi - phi_t_y
    inner += profiles.grad_beta - profiles.beta * grid.coords

    acc = -np.einsum("ij,j...->i...", lam, inner) * (
        cbar * mu ** (-exps.delta - exps.sigma)
    )
    acc -= (frame.mu_tau / mu) * state.V
    acc -= 2.0 * np.einsum("ij,j...->i...", frame.GammaStar, state.V)
    return acc


def max_wave_speed(
    state: FlowState,
    frame: ModulationFrame,
    profiles: WeightProfiles,
    exps: ExponentSet,
    cbar: float,
) -> float:
    """CFL bound from the principal symbol of the flux term."""
    fac = (
        cbar
        * frame.mu ** (-exps.delta - exps.sigma)
        * (1.0 + profiles.beta)
        * state.Jdet ** (-1.0 / exps.alpha)
        * float(np.max(frame.d))
    )
    bound = kernels.spectral_bound_field(state.Ainv)
    return float(np.max(np.sqrt(np.maximum(fac, 0.0)) * bound))


def apriori_monitor(
    state: FlowState, order: int, sn_inst: float | None = None,
    acc: np.ndarray | None = None,
) -> dict:
    """Margins of the a-priori assumptions; pure report, never raises."""
    eye = np.eye(3).reshape(3, 3, 1, 1, 1)
    flags = {}

    def entry(name, value, cap):
        flags[name] = {"value": float(value), "cap": cap, "ok": bool(value < cap),
                       "margin": float(cap - value)}

    entry("A_minus_id", np.max(np.abs(state.Ainv - eye)), APRIORI_CAP)
    dtheta = state.Dtheta
    entry("D_theta", np.max(np.abs(dtheta)), APRIORI_CAP)
    entry("J_minus_id", np.max(np.abs(state.Jdet - 1.0)), APRIORI_CAP)
    if sn_inst is not None:
        entry("SN", sn_inst, APRIORI_CAP)
    dv = kernels.grad_vector(state.V, state.grid.dx)
    entry("D_V", np.max(np.abs(dv)), DV_CAP)
    if acc is not None:
        dvt = kernels.grad_vector(acc, state.grid.dx)
        entry("D_V_tau", np.max(np.abs(dvt)), DV_CAP)
    return flags


def evolve(
    config: EvolverConfig,
    traj,
    rescaling: TimeRescaling,
    frames: FrameTrack | None = None,
    on_snapshot=None,
) -> RunLedger:
    """March (theta, V) to tau_end and return the snapshot ledger.

    Terminates early with status "apriori_violated" if any monitored bound
    trips; collapse of the CFL step below 1e-12 raises CflFailure.
    """
    config.validate()
    grid = config.grid
    cbar = traj.params.Cbar
    alpha = traj.params.alpha

    mu1, pre_asymptotic = estimate_mu1(traj, rescaling)
    exps = exponents(alpha, config.sigma_choice, mu1)
    profiles, theta0, v0 = build_profiles(grid, config.lam, config.epsilon, config.order)

    if frames is None:
        frames = FrameTrack(traj, rescaling)
    shell = boundary_shell_mask(grid)

    ledger = RunLedger(
        meta={
            "tau_end": config.tau_end,
            "grid_n": grid.n,
            "half_width": grid.half_width,
            "dx": grid.dx,
            "order": config.order,
            "epsilon": config.epsilon,
            "lambda": config.lam,
            "cbar": cbar,
            "alpha": alpha,
            "sigma": exps.sigma,
            "delta": exps.delta,
            "mu0": exps.mu0,
            "mu1": exps.mu1,
            "pre_asymptotic": pre_asymptotic,
            "beta_sobolev_sq": profiles.beta_sobolev_sq,
            "data_norm_sq": profiles.data_norm_sq,
            "cfl": config.cfl,
            "backend": kernels.backend_name(),
        }
    )

    state = FlowState(tau=0.0, theta=theta0, V=v0, grid=grid)
    frame = frames.at(0.0)
    sn_running = 0.0
    prev_snapshot: tuple[FlowState, ModulationFrame] | None = None

    def take_snapshot(state, frame, acc, diag: StepDiagnostics):
        nonlocal sn_running, prev_snapshot
        report = norms_report(state, frame, profiles, exps, config.order, cbar)
        sn_running = max(sn_running, report.SN_inst)
        flags = apriori_monitor(state, config.order, report.SN_inst, acc)
        residuals = {}
        if prev_snapshot is not None:
            ps, pf = prev_snapshot
            residuals = identity_suite(state, frame, profiles, alpha, ps, pf)
        row = report.to_row()
        row.update(
            {
                "SN": sn_running,
                "support_radius": {
                    f"{thr:.0e}": support_radius(state, thr)
                    for thr in SUPPORT_THRESHOLDS
                },
                "apriori": flags,
                "dt_tau": diag.dt_tau,
                "max_wave_speed": diag.max_wave_speed,
                "mu": frame.mu,
                "mu_tau": frame.mu_tau,
            }
        )
        ledger.append(row)
        if on_snapshot is not None:
            on_snapshot(state, frame, len(ledger.rows) - 1)
        prev_snapshot = (
            FlowState(tau=state.tau, theta=state.theta.copy(), V=state.V.copy(),
                      grid=grid),
            frame,
        )
        if not all(f["ok"] for f in flags.values()):
            bad = [k for k, f in flags.items() if not f["ok"]]
            raise AprioriViolated(f"monitors tripped: {bad}")

    tau = 0.0
    step = 0
    try:
        c0 = max_wave_speed(state, frame, profiles, exps, cbar)
        acc0 = rhs_theta(state, frame, profiles, exps, cbar)
        take_snapshot(state, frame, acc0, StepDiagnostics(0.0, 0.0, c0, {}))

        while tau < config.tau_end:
            c_max = max_wave_speed(state, frame, profiles, exps, cbar)
            dt = config.cfl * grid.dx / c_max if c_max > 0 else config.dtau_max
            dt = min(dt, config.dtau_max, config.tau_end - tau)
            if dt < 1e-12:
                raise CflFailure(f"dtau underflow at tau={tau}")

            # classical RK4 on the first-order system (theta, V)
            f_mid = frames.at(tau + 0.5 * dt)
            f_end = frames.at(tau + dt)

            def deriv(th, v, fr, t_loc):
                s = FlowState(tau=t_loc, theta=th, V=v, grid=grid)
                return v, rhs_theta(s, fr, profiles, exps, cbar)

            k1t, k1v = state.V, rhs_theta(state, frame, profiles, exps, cbar)
            k2t, k2v = deriv(
                state.theta + 0.5 * dt * k1t, state.V + 0.5 * dt * k1v, f_mid,
                tau + 0.5 * dt,
            )
            k3t, k3v = deriv(
                state.theta + 0.5 * dt * k2t, state.V + 0.5 * dt * k2v, f_mid,
                tau + 0.5 * dt,
            )
            k4t, k4v = deriv(
                state.theta + dt * k3t, state.V + dt * k3v, f_end, tau + dt
            )

            theta_new = state.theta + dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
            v_new = state.V + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            theta_new[:, shell] = 0.0
            v_new[:, shell] = 0.0

            tau += dt
            step += 1
            state = FlowState(tau=tau, theta=theta_new, V=v_new, grid=grid)
            frame = f_end

            if step % config.snapshot_stride == 0 or tau >= config.tau_end:
                acc = rhs_theta(state, frame, profiles, exps, cbar)
                take_snapshot(
                    state, frame, acc, StepDiagnostics(tau, dt, c_max, {})
                )
    except AprioriViolated:
        ledger.status = "apriori_violated"
        return ledger

    ledger.status = "ok"
    return ledger
