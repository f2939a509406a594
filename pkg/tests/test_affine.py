import math

import numpy as np
import pytest

from affinegas.affine import (
    AffineParams,
    AffineTrajectory,
    affine_rhs,
    asymptotic_fit,
    integrate_affine,
    ode_energy,
)
from affinegas.errors import TrajectoryTooShort


def isotropic_params(a0dot=1.0, tbar=1.0, alpha=1.5):
    return AffineParams(
        A0=np.eye(3), A0dot=a0dot * np.eye(3), Tbar=tbar, alpha=alpha
    )


class TestRhs:
    def test_identity_all_ones(self):
        p = isotropic_params(alpha=1.5)
        assert np.allclose(affine_rhs(np.eye(3), p), np.eye(3))

    def test_hand_value_alpha3(self):
        # A = 2I, A0 = I, Tbar = 1, alpha = 3: 8^(-1/3) * (1/2) I = 0.25 I
        p = AffineParams(A0=np.eye(3), A0dot=np.zeros((3, 3)), Tbar=1.0, alpha=3.0)
        assert np.allclose(affine_rhs(2.0 * np.eye(3), p), 0.25 * np.eye(3))

    def test_hand_value_anisotropic(self):
        # A = diag(1,1,2), Tbar = 2, alpha = 3/2: 2 * 2^(-2/3) * diag(1,1,1/2)
        p = AffineParams(A0=np.eye(3), A0dot=np.zeros((3, 3)), Tbar=2.0, alpha=1.5)
        expect = 2.0 * 2.0 ** (-2.0 / 3.0) * np.diag([1.0, 1.0, 0.5])
        assert np.allclose(affine_rhs(np.diag([1.0, 1.0, 2.0]), p), expect)


class TestEnergy:
    def test_rest_value(self):
        p = isotropic_params(a0dot=0.0)
        assert ode_energy(np.eye(3), np.zeros((3, 3)), p) == pytest.approx(1.5)

    def test_kinetic_scaling(self):
        p = isotropic_params()
        adot = np.eye(3)
        e1 = ode_energy(np.eye(3), adot, p)
        e2 = ode_energy(np.eye(3), 2.0 * adot, p)
        pot = p.alpha * p.Cbar
        assert e2 - pot == pytest.approx(4.0 * (e1 - pot))

    def test_conservation_along_trajectory(self):
        rng = np.random.default_rng(2)
        p = AffineParams(
            A0=np.eye(3) + 0.1 * rng.normal(size=(3, 3)),
            A0dot=np.eye(3) + 0.2 * rng.normal(size=(3, 3)),
            Tbar=1.3,
            alpha=1.5,
        )
        traj = integrate_affine(p, 50.0, rel_tol=1e-10)
        assert traj.status == "ok"
        assert traj.energy_drift() < 1e-8


class TestIntegration:
    def test_scalar_reduction_oracle(self):
        # isotropic alpha=3/2 seed: a'' = a^-3 with a(0)=a'(0)=1 has the
        # closed form a(t) = sqrt(1 + 2t + 2t^2)
        p = isotropic_params()
        traj = integrate_affine(p, 10.0, rel_tol=1e-10)
        a, ad = traj.eval(10.0)
        exact = math.sqrt(1.0 + 2.0 * 10.0 + 2.0 * 100.0)
        assert abs(a[0, 0] - exact) < 1e-8
        assert np.max(np.abs(a - exact * np.eye(3))) < 1e-8
        exact_ad = (1.0 + 2.0 * 10.0) / exact
        assert abs(ad[0, 0] - exact_ad) < 1e-8

    def test_scalar_oracle_brute_force(self):
        # independent oracle: tiny fixed-step RK4 on the scalar ODE
        p = isotropic_params(a0dot=0.3, tbar=2.0, alpha=2.0)
        # scalar reduction: a'' = Cbar a^(-3/alpha - 1)
        expo = -3.0 / p.alpha - 1.0
        h = 1e-4
        a, v = 1.0, 0.3
        for _ in range(int(5.0 / h)):
            def acc(a):
                return p.Cbar * a**expo

            k1a, k1v = v, acc(a)
            k2a, k2v = v + 0.5 * h * k1v, acc(a + 0.5 * h * k1a)
            k3a, k3v = v + 0.5 * h * k2v, acc(a + 0.5 * h * k2a)
            k4a, k4v = v + h * k3v, acc(a + h * k3a)
            a += h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
            v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        traj = integrate_affine(p, 5.0, rel_tol=1e-10)
        am, _ = traj.eval(5.0)
        assert abs(am[0, 0] - a) < 1e-8

    def test_symmetric_data_stays_symmetric(self):
        p = isotropic_params(a0dot=0.0)
        traj = integrate_affine(p, 20.0, rel_tol=1e-9)
        for a in traj.As:
            assert np.max(np.abs(a - a.T)) < 1e-9

    def test_det_growth_cubic(self):
        p = isotropic_params()
        traj = integrate_affine(p, 100.0, rel_tol=1e-9)
        ratio = traj.detAs[-1] / (1.0 + 100.0**3)
        assert 0.1 < ratio < 100.0
        assert np.all(np.diff(traj.detAs) > 0)

    def test_jacobi_formula_at_nodes(self):
        p = isotropic_params(a0dot=0.5)
        traj = integrate_affine(p, 10.0, rel_tol=1e-10)
        for a, ad, d in zip(traj.As[::10], traj.Ads[::10], traj.detAs[::10]):
            # (det A)' = det A tr(A' A^-1), with (det A)' from the chain rule
            lhs = d * np.trace(ad @ np.linalg.inv(a))
            h = 1e-6
            t = traj.ts[np.argmin(np.abs(traj.detAs - d))]
            if t - h < 0 or t + h > traj.t_end:
                continue
            ap, _ = traj.eval(t + h)
            am, _ = traj.eval(t - h)
            num = (np.linalg.det(ap) - np.linalg.det(am)) / (2 * h)
            assert abs(lhs - num) < 1e-4 * max(1.0, abs(lhs))


class TestAsymptotics:
    def test_linear_motion_hook(self):
        # force-off trajectory built from closed form: A = (1 + t) I
        ts = np.linspace(0.0, 200.0, 401)
        As = np.array([(1.0 + t) * np.eye(3) for t in ts])
        Ads = np.array([np.eye(3) for _ in ts])
        traj = AffineTrajectory.from_samples(ts, As, Ads)
        fit = asymptotic_fit(traj)
        assert np.allclose(fit.A1_est, np.eye(3), atol=1e-10)
        assert fit.mu1_est == pytest.approx(1.0)
        # ratio -> det(A1) = 1 at late times
        late = fit.ratio_series[fit.ratio_series[:, 0] > 100.0]
        assert np.allclose(late[:, 1], 1.0, rtol=0.05)

    def test_decay_exponent(self):
        p = isotropic_params()
        traj = integrate_affine(p, 1000.0, rel_tol=1e-10)
        fit = asymptotic_fit(traj)
        assert fit.M_decay_exponent <= -3.0 / p.alpha + 0.3
        assert fit.mu1_est == pytest.approx(math.sqrt(2.0), rel=1e-3)

    def test_ratio_settles(self):
        p = isotropic_params(a0dot=3.0)
        traj = integrate_affine(p, 1000.0, rel_tol=1e-10)
        fit = asymptotic_fit(traj)
        late = fit.ratio_series[fit.ratio_series[:, 0] >= 100.0]
        spread = late[:, 1].max() / late[:, 1].min() - 1.0
        assert spread < 0.01

    def test_too_short(self):
        p = isotropic_params()
        traj = integrate_affine(p, 50.0, rel_tol=1e-8)
        with pytest.raises(TrajectoryTooShort):
            asymptotic_fit(traj)


def test_csv_export(tmp_path):
    p = isotropic_params()
    traj = integrate_affine(p, 5.0, rel_tol=1e-8)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("t,A11")
    assert len(lines) == len(traj.ts) + 1
    assert len(lines[1].split(",")) == 21
