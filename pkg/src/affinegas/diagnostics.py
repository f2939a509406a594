"""Functionals, identities and decay fits for perturbation runs.

Norm semantics: the evolution norm reported per snapshot is instantaneous;
the running supremum (the quantity that is monotone by definition) is
accumulated at ledger level by the evolver so it can never be recomputed
out of order.  The curl functionals are likewise stored per instant; their
decay against (1 + tau^2) exp(-2*mu0*tau) is what the trend fits measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import LedgerCorrupt, StencilUnderflow, WindowTooShort
from .fields import (
    FlowState,
    WeightProfiles,
    curl_lambda_a,
    derivative_stack,
    grad_eta,
    multi_indices,
    piola_residual,
    poly_bump_field,
)
from .ledger import RunLedger
from .modulation import ModulationFrame
from .timeframe import ExponentSet

SUPPORT_THRESHOLDS = (1e-8, 1e-10, 1e-12)


# ---------------------------------------------------------------------------
# norm reports
# ---------------------------------------------------------------------------

@dataclass
class NormReport:
    """All functionals at one tau instant, with a per-derivative breakdown."""

    tau: float
    SN_inst: float
    BN_V: float
    BN_theta: float
    EN: float
    DN: float
    CNm1: float
    per_nu: dict

    def to_row(self) -> dict:
        return {
            "tau": self.tau,
            "SN_inst": self.SN_inst,
            "BN_V": self.BN_V,
            "BN_theta": self.BN_theta,
            "EN": self.EN,
            "DN": self.DN,
            "CNm1": self.CNm1,
            "per_nu": self.per_nu,
        }


def _nu_key(nu) -> str:
    return "".join(str(k) for k in nu)


def _conjugated_weight(g: np.ndarray, p: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Pointwise sum_{ij} (d_i/d_j) * (N[j,i])^2 with N = P g P^T."""
    n = np.einsum("ai,ij...,bj->ab...", p, g, p)
    m = np.outer(1.0 / d, d)  # m[j, i] = d_i / d_j
    return np.einsum("ji,ji...->...", m, n**2)


def norms_report(
    state: FlowState,
    frame: ModulationFrame,
    profiles: WeightProfiles,
    exps: ExponentSet,
    order: int,
    cbar: float,
) -> NormReport:
    """Evaluate every functional at the state's instant.

    Integrals are trapezoid sums over the grid; since all integrands vanish
    identically outside the propagation cone this equals the restriction to
    the support bounding box.
    """
    grid = state.grid
    if 4 * (order + 1) + 1 > grid.n:
        raise StencilUnderflow(f"order {order} stencils unresolvable on n={grid.n}")

    mu, mu_tau = frame.mu, frame.mu_tau
    lam_inv = frame.LambdaInv
    p, d = frame.P, frame.d
    sig, dlt, alpha = exps.sigma, exps.delta, exps.alpha
    mu_sig = mu**sig
    mu_del = mu**-dlt
    beta_fac = (1.0 + profiles.beta) * state.Jdet ** (-1.0 / alpha)

    th_stack = derivative_stack(state.theta, order, grid.dx)
    v_stack = derivative_stack(state.V, order, grid.dx)

    sn = bn_v = bn_th = en = dn = cnm1 = 0.0
    per_nu = {}
    for nu in multi_indices(order):
        top = sum(nu) == order
        th_nu, v_nu = th_stack[nu], v_stack[nu]

        th_sq = grid.integrate(np.einsum("i...,i...->...", th_nu, th_nu))
        v_sq = grid.integrate(np.einsum("i...,i...->...", v_nu, v_nu))
        g = grad_eta(th_nu, state.Ainv, grid.dx)
        grad_sq = grid.integrate(np.einsum("ir...,ir...->...", g, g))
        div = np.einsum("ii...->...", g)
        div_sq = grid.integrate(div**2)
        curl_v = curl_lambda_a(v_nu, state.Ainv, frame.Lambda, grid.dx)
        curl_v_sq = grid.integrate(np.einsum("ij...,ij...->...", curl_v, curl_v))
        curl_th = curl_lambda_a(th_nu, state.Ainv, frame.Lambda, grid.dx)
        curl_th_sq = grid.integrate(np.einsum("ij...,ij...->...", curl_th, curl_th))

        sn += mu_sig * v_sq + th_sq
        sn += (mu_del if top else 1.0) * (grad_sq + div_sq)
        bn_v += (mu_del if top else 1.0) * curl_v_sq
        bn_th += (mu_del if top else 1.0) * curl_th_sq

        v_quad = grid.integrate(np.einsum("ij,i...,j...->...", lam_inv, v_nu, v_nu))
        th_quad = grid.integrate(np.einsum("ij,i...,j...->...", lam_inv, th_nu, th_nu))
        conj = _conjugated_weight(g, p, d)
        elastic = grid.integrate(beta_fac * (conj + div**2 / alpha))
        en += 0.5 * (mu_sig * v_quad + cbar * mu_del * th_quad + cbar * mu_del * elastic)
        dn += th_sq + elastic
        if not top:
            cnm1 += 0.5 * cbar * (th_quad + elastic)

        per_nu[_nu_key(nu)] = {
            "th": th_sq,
            "v_musig": mu_sig * v_sq,
            "grad": grad_sq,
            "div": div_sq,
            "curlV": curl_v_sq,
            "curlTh": curl_th_sq,
        }

    dn *= cbar * 0.5 * dlt * mu_del * (mu_tau / mu)
    return NormReport(
        tau=state.tau,
        SN_inst=sn,
        BN_V=bn_v,
        BN_theta=bn_th,
        EN=en,
        DN=dn,
        CNm1=cnm1,
        per_nu=per_nu,
    )


def support_radius(state: FlowState, threshold: float) -> float:
    """Largest |y| where the pointwise amplitude |theta| + |V| exceeds threshold."""
    amp = np.sqrt(np.einsum("i...,i...->...", state.theta, state.theta))
    amp += np.sqrt(np.einsum("i...,i...->...", state.V, state.V))
    mask = amp > threshold
    if not mask.any():
        return 0.0
    return float(np.sqrt(state.grid.r2[mask].max()))


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------

RESIDUAL_KINDS = {
    "curl_of_gradient": "spatial4",
    "piola": "spatial4",
    "jacobi_spatial": "spatial4",
    "a_diff_formula": "spatial4",
    "a_identity": "exact",
    "lambda_identity": "exact",
    "aj_split": "exact",
    "curl_of_lambda_eta": "exact",
    "cross_matrix_split": "exact",
    "j_expansion": "quadratic",
    "aj_expansion": "quadratic",
    "key_energy_identity": "temporal2",
    "curl_commutator": "temporal2",
    "jacobi_temporal": "temporal2",
}


def _maxabs(x: np.ndarray) -> float:
    return float(np.max(np.abs(x)))


def identity_suite(
    state: FlowState,
    frame: ModulationFrame,
    profiles: WeightProfiles,
    alpha: float,
    prev_state: FlowState | None = None,
    prev_frame: ModulationFrame | None = None,
) -> dict[str, float]:
    """Max-norm residuals of the structural identities.

    Spatial items carry O(dx^4) truncation, "exact" items are algebraic and
    sit at rounding level, "quadratic" items have an O(|Dtheta|^2) remainder,
    and temporal items are O(dtau^2) centered at the midpoint of the two
    supplied snapshots (skipped when no previous snapshot is given).
    """
    grid = state.grid
    dx = grid.dx
    lam = frame.Lambda
    ainv, deta, jdet = state.Ainv, state.Deta, state.Jdet
    dtheta = state.Dtheta
    jfac = jdet ** (-1.0 / alpha)
    res: dict[str, float] = {}

    # --- spatial, O(dx^4) ---
    fb, grad_fb = poly_bump_field(grid, r0=1.8)
    f_vec = np.einsum("jm,sm...,s...->j...", lam, ainv, grad_fb)  # Lambda grad_eta f
    res["curl_of_gradient"] = _maxabs(curl_lambda_a(f_vec, ainv, lam, dx))

    res["piola"] = piola_residual(state)

    d_deta = np.stack(
        [np.stack([kernels.grad_scalar(deta[l, s], dx) for s in range(3)])
         for l in range(3)]
    )  # [l, s, m] = d_m (Deta[l, s])
    worst = 0.0
    for m in range(3):
        lhs = kernels.partial4(jdet, m, dx)
        rhs = jdet * np.einsum("sl...,ls...->...", ainv, d_deta[:, :, m])
        worst = max(worst, _maxabs(lhs - rhs))
    res["jacobi_spatial"] = worst

    worst = 0.0
    for m in range(3):
        d_ainv = np.stack(
            [np.stack([kernels.partial4(ainv[k, i], m, dx) for i in range(3)])
             for k in range(3)]
        )
        rhs = -np.einsum("kl...,ls...,si...->ki...", ainv, d_deta[:, :, m], ainv)
        worst = max(worst, _maxabs(d_ainv - rhs))
    res["a_diff_formula"] = worst

    # --- exact algebraic identities ---
    eye = np.eye(3).reshape(3, 3, 1, 1, 1)
    res["a_identity"] = _maxabs(
        ainv - eye + np.einsum("kl...,lj...->kj...", ainv, dtheta)
    )
    m_eta = np.einsum("jl...,lp...->jp...", ainv, deta)
    res["lambda_identity"] = _maxabs(
        np.einsum("ip,jp...->ij...", lam, m_eta) - lam.reshape(3, 3, 1, 1, 1)
    )
    x_full = ainv * jfac - eye
    x_split = (ainv - eye) * jfac + eye * (jfac - 1.0)
    res["aj_split"] = _maxabs(x_full - x_split)

    w_tilde = np.einsum("ij,jl...,lk...->ik...", lam, deta, ainv)
    m_curl = np.einsum("im...,jm->ij...", w_tilde, lam)
    res["curl_of_lambda_eta"] = _maxabs(m_curl - m_curl.transpose(1, 0, 2, 3, 4))

    y = grid.coords
    eta = y + state.theta
    lam_eta = np.einsum("ik,k...->i...", lam, eta)
    g_lhs = np.einsum("jm,sm...,s...->j...", lam, ainv, y)
    lhs_cross = np.einsum("i...,j...->ij...", lam_eta, g_lhs)
    lhs_cross -= lhs_cross.transpose(1, 0, 2, 3, 4)
    lam_y = np.einsum("jk,k...->j...", lam, y)
    lam_th = np.einsum("ik,k...->i...", lam, state.theta)
    first = np.einsum("i...,j...->ij...", lam_th, lam_y)
    first -= first.transpose(1, 0, 2, 3, 4)
    u = np.einsum("jm,lm...,sl...,s...->j...", lam, dtheta, ainv, y)
    defect = np.einsum("i...,j...->ij...", lam_eta, u)
    defect -= defect.transpose(1, 0, 2, 3, 4)
    res["cross_matrix_split"] = _maxabs(lhs_cross - (first - defect))

    # --- quadratic-remainder expansions ---
    tr_dtheta = np.einsum("ii...->...", dtheta)
    res["j_expansion"] = _maxabs(1.0 - jfac - tr_dtheta / alpha)
    rhs = (
        -np.einsum("kl...,lj...->kj...", ainv, dtheta) * jfac
        - eye * (tr_dtheta / alpha)
    )
    res["aj_expansion"] = _maxabs(x_full - rhs)

    # --- temporal, O(dtau^2) about the snapshot midpoint ---
    if prev_state is not None and prev_frame is not None:
        dtau = state.tau - prev_state.tau
        if dtau > 0:
            res.update(
                _temporal_residuals(prev_state, state, prev_frame, frame, alpha, dtau)
            )
    return res


def _temporal_residuals(s1, s2, f1, f2, alpha, dtau) -> dict[str, float]:
    grid = s1.grid
    dx = grid.dx
    out = {}

    # Jacobian motion: dJ/dtau = J tr(Ainv . D(dtheta/dtau))
    j_mid = 0.5 * (s1.Jdet + s2.Jdet)
    ainv_mid = 0.5 * (s1.Ainv + s2.Ainv)
    dv = kernels.grad_vector((s2.theta - s1.theta) / dtau, dx)
    lhs = (s2.Jdet - s1.Jdet) / dtau
    rhs = j_mid * np.einsum("sl...,ls...->...", ainv_mid, dv)
    out["jacobi_temporal"] = _maxabs(lhs - rhs)

    # commutator of d/dtau with the modified curl, applied to theta
    lam_mid = 0.5 * (f1.Lambda + f2.Lambda)
    th_mid = 0.5 * (s1.theta + s2.theta)
    c1 = curl_lambda_a(s1.theta, s1.Ainv, f1.Lambda, dx)
    c2 = curl_lambda_a(s2.theta, s2.Ainv, f2.Lambda, dx)
    b1 = np.einsum("jm,sm...->sj...", f1.Lambda, s1.Ainv)
    b2 = np.einsum("jm,sm...->sj...", f2.Lambda, s2.Ainv)
    db = (b2 - b1) / dtau
    dth_mid = kernels.grad_vector(th_mid, dx)
    comm = np.einsum("sj...,is...->ij...", db, dth_mid)
    comm -= comm.transpose(1, 0, 2, 3, 4)
    curl_mid_of_dth = curl_lambda_a((s2.theta - s1.theta) / dtau, ainv_mid, lam_mid, dx)
    out["curl_commutator"] = _maxabs((c2 - c1) / dtau - curl_mid_of_dth - comm)

    # conjugated-energy identity with its eigenframe error term
    g1 = grad_eta(s1.theta, s1.Ainv, dx)
    g2 = grad_eta(s2.theta, s2.Ainv, dx)
    g_mid, dg = 0.5 * (g1 + g2), (g2 - g1) / dtau
    lam_inv_mid = np.linalg.inv(lam_mid)
    lhs = np.einsum("lj,ij...,im,ml...->...", lam_mid, g_mid, lam_inv_mid, dg)

    p1, d1 = f1.P, f1.d
    p2, d2 = f2.P, f2.d
    p_mid, d_mid = 0.5 * (p1 + p2), 0.5 * (d1 + d2)
    dp, dd = (p2 - p1) / dtau, (d2 - d1) / dtau

    def conj_sq(p, d, g):
        n = np.einsum("ai,ij...,bj->ab...", p, g, p)
        m = np.outer(1.0 / d, d)
        return np.einsum("ji,ji...->...", m, n**2)

    half_dw = 0.5 * (conj_sq(p2, d2, g2) - conj_sq(p1, d1, g1)) / dtau
    n_mid = np.einsum("ai,ij...,bj->ab...", p_mid, g_mid, p_mid)
    # ddw[j, i] = d/dtau (d_i / d_j) by the quotient rule
    ddw = (np.outer(np.ones(3), dd) - np.outer(dd / d_mid, d_mid)) / d_mid[:, None]
    t_err = -0.5 * np.einsum("ji,ji...->...", ddw, n_mid**2)
    q, qi = np.diag(d_mid), np.diag(1.0 / d_mid)
    s_rot = dp @ p_mid.T
    core = np.einsum("ab,bc...->ac...", q, n_mid.transpose(1, 0, 2, 3, 4))
    # trace(Q N^T Q^-1 (S N - N S)) pointwise, with S = dP P^T
    inner = np.einsum("ab,bc...->ac...", qi @ s_rot, n_mid) - np.einsum(
        "ab...,bc->ac...", np.einsum("ab,bc...->ac...", qi, n_mid), s_rot
    )
    t_err -= np.einsum("ab...,ba...->...", core, inner)
    out["key_energy_identity"] = _maxabs(lhs - half_dw - t_err)
    return out


# ---------------------------------------------------------------------------
# propagation and decay
# ---------------------------------------------------------------------------

@dataclass
class PropagationReport:
    taus: np.ndarray
    radii: np.ndarray
    K_fit: float
    intercept: float
    r_squared: float
    bound_ok: bool


def support_and_propagation(
    ledger: RunLedger, threshold: float = 1e-10
) -> PropagationReport:
    """Fit the support radius series against a linear-in-tau cone.

    The bound checked per snapshot is r(tau) <= 1 + K_fit*tau + 3*dx.
    """
    if len(ledger.rows) < 5:
        raise WindowTooShort("need at least 5 snapshots")
    key = f"{threshold:.0e}"
    taus = np.array(ledger.series("tau"))
    try:
        radii = np.array([row["support_radius"][key] for row in ledger.rows])
    except KeyError as exc:
        raise LedgerCorrupt(f"no stored radius at threshold {key}") from exc

    if np.all(radii == 0.0):
        return PropagationReport(taus, radii, 0.0, 0.0, 1.0, True)

    k_fit, intercept = np.polyfit(taus, radii, 1)
    pred = intercept + k_fit * taus
    ss_res = float(np.sum((radii - pred) ** 2))
    ss_tot = float(np.sum((radii - radii.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dx = ledger.meta.get("dx", 0.0)
    bound_ok = bool(np.all(radii <= 1.0 + k_fit * taus + 3.0 * dx + 1e-12))
    return PropagationReport(taus, radii, float(k_fit), float(intercept), r2, bound_ok)


@dataclass
class DecayFit:
    quantity: str
    exponent: float
    r_squared: float
    window: tuple[float, float]


def _log_linear_fit(taus: np.ndarray, vals: np.ndarray, name: str) -> DecayFit | None:
    mask = vals > 0
    if mask.sum() < 3:
        return None
    t, v = taus[mask], np.log(vals[mask])
    slope, icpt = np.polyfit(t, v, 1)
    pred = icpt + slope * t
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(name, float(slope), r2, (float(t[0]), float(t[-1])))


def decay_and_coercivity(
    ledger: RunLedger,
    exps: ExponentSet,
    fit_tau_min: float = 2.0,
) -> tuple[list[DecayFit], list[dict]]:
    """Trailing-window decay fits plus the coercivity-inequality constants.

    Coercivity ratios compare each derivative's theta content against the
    running supremum of the matching V content plus its initial value; the
    constants should stay finite and stable along the run.
    """
    taus = np.array(ledger.series("tau"))
    if exps.mu0 * taus[-1] < 5.0:
        raise WindowTooShort(
            f"mu0*tau_end = {exps.mu0 * taus[-1]:.2f} < 5 e-foldings"
        )

    fits: list[DecayFit] = []
    bn_v = np.array(ledger.series("BN_V"))
    if np.max(bn_v) > 0:
        window = taus >= fit_tau_min
        fits_val = _log_linear_fit(
            taus[window], (bn_v / (1.0 + taus**2))[window], "BN_V/(1+tau^2)"
        )
        if fits_val is not None:
            fits.append(fits_val)

    order = max(sum(int(c) for c in k) for k in ledger.rows[0]["per_nu"])
    run_sup = {k: 0.0 for k in ledger.rows[0]["per_nu"]}
    peak = {k: {"c1": 0.0, "c2": 0.0, "c3": 0.0} for k in run_sup}
    init = ledger.rows[0]["per_nu"]

    def ratio(num, den):
        if num == 0.0:
            return 0.0
        return num / den if den > 0 else np.inf

    for row in ledger.rows:
        for k, vals in row["per_nu"].items():
            run_sup[k] = max(run_sup[k], vals["v_musig"])
        for k, vals in row["per_nu"].items():
            if sum(int(c) for c in k) > order - 1:
                continue
            up = [
                k2
                for k2 in run_sup
                if sum(int(c) for c in k2) == sum(int(c) for c in k) + 1
                and all(int(a) <= int(b) for a, b in zip(k, k2))
            ]
            sup_up = sum(run_sup[k2] for k2 in up)
            peak[k]["c1"] = max(peak[k]["c1"], ratio(vals["th"], run_sup[k] + init[k]["th"]))
            peak[k]["c2"] = max(peak[k]["c2"], ratio(vals["grad"], sup_up + init[k]["grad"]))
            peak[k]["c3"] = max(peak[k]["c3"], ratio(vals["div"], sup_up + init[k]["div"]))

    table = [
        {"nu": k, **peak[k]}
        for k in sorted(peak, key=lambda s: (sum(int(c) for c in s), s))
        if sum(int(c) for c in k) <= order - 1
    ]
    return fits, table


def equivalence_constants(ledger: RunLedger) -> tuple[float, float] | None:
    """Measured constants of the norm-energy equivalence.

    Returns (C1, C2) with C1*SN <= sup(EN + CNm1) <= C2*(SN + SN(0)); None
    for identically zero runs.
    """
    sn = np.array(ledger.series("SN"))
    en = np.array(ledger.series("EN"))
    cn = np.array(ledger.series("CNm1"))
    if np.max(sn) == 0.0:
        return None
    sup_ec = np.maximum.accumulate(en + cn)
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = float(np.min(sup_ec / sn))
        c2 = float(np.max(sup_ec / (sn + sn[0])))
    return c1, c2
