import math

import numpy as np
import pytest

from affinegas.affine import AffineParams, AffineTrajectory, integrate_affine
from affinegas.errors import OutOfRange, SigmaOutOfRange
from affinegas.timeframe import (
    build_rescaling,
    default_sigma,
    estimate_mu1,
    exponents,
    trajectory_spanning_tau,
)

C0 = math.asinh(1.0)  # rescaled-clock offset of the reference closed form


def reference_params():
    return AffineParams(A0=np.eye(3), A0dot=np.eye(3), Tbar=1.0, alpha=1.5)


def tau_exact(t):
    return (math.asinh(2.0 * t + 1.0) - C0) / math.sqrt(2.0)


class TestRescaling:
    def test_frozen_mu_is_identity(self):
        ts = np.linspace(0.0, 10.0, 21)
        As = np.array([np.eye(3) for _ in ts])
        Ads = np.array([np.zeros((3, 3)) for _ in ts])
        resc = build_rescaling(AffineTrajectory.from_samples(ts, As, Ads))
        for t in (0.0, 1.7, 10.0):
            assert resc.tau_of_t(t) == pytest.approx(t, abs=1e-12)

    def test_linear_mu_gives_log(self):
        ts = np.linspace(0.0, 9.0, 46)
        As = np.array([(1.0 + t) * np.eye(3) for t in ts])
        Ads = np.array([np.eye(3) for _ in ts])
        resc = build_rescaling(AffineTrajectory.from_samples(ts, As, Ads))
        for t in (0.5, 3.0, 9.0):
            assert abs(resc.tau_of_t(t) - math.log1p(t)) < 1e-9

    def test_closed_form_reference(self):
        traj = integrate_affine(reference_params(), 100.0, rel_tol=1e-10)
        resc = build_rescaling(traj)
        for t in (0.1, 1.0, 10.0, 100.0):
            assert abs(resc.tau_of_t(t) - tau_exact(t)) < 1e-7

    def test_round_trip(self):
        traj = integrate_affine(reference_params(), 50.0, rel_tol=1e-10)
        resc = build_rescaling(traj)
        for t in (0.3, 4.0, 49.0):
            assert abs(resc.t_of_tau(resc.tau_of_t(t)) - t) < 1e-8 * max(1.0, t)

    def test_tau_zero_and_monotone(self):
        traj = integrate_affine(reference_params(), 20.0, rel_tol=1e-9)
        resc = build_rescaling(traj)
        assert resc.tau_nodes[0] == 0.0
        assert np.all(np.diff(resc.tau_nodes) > 0)

    def test_mu_exponential_in_tau(self):
        # mu(tau) = cosh(sqrt(2) tau + c0)/sqrt(2) for the reference seed
        traj, resc = trajectory_spanning_tau(reference_params(), 4.0)
        for tau in (1.0, 2.5, 4.0):
            exact = math.cosh(math.sqrt(2.0) * tau + C0) / math.sqrt(2.0)
            assert resc.mu_of_tau(tau) == pytest.approx(exact, rel=1e-6)

    def test_mu_tau_identity(self):
        traj, resc = trajectory_spanning_tau(reference_params(), 3.0)
        # mu_tau = mu_t * mu, cross-checked by differencing mu(tau)
        for tau in (0.5, 2.0):
            h = 1e-5
            num = (resc.mu_of_tau(tau + h) - resc.mu_of_tau(tau - h)) / (2 * h)
            assert resc.mu_tau_of_tau(tau) == pytest.approx(num, rel=1e-5)

    def test_out_of_range(self):
        traj = integrate_affine(reference_params(), 5.0, rel_tol=1e-8)
        resc = build_rescaling(traj)
        with pytest.raises(OutOfRange):
            resc.tau_of_t(6.0)
        with pytest.raises(OutOfRange):
            resc.t_of_tau(resc.tau_end + 1.0)


class TestMu1:
    def test_reference_value(self):
        traj, resc = trajectory_spanning_tau(reference_params(), 5.0)
        mu1, pre = estimate_mu1(traj, resc)
        assert mu1 == pytest.approx(math.sqrt(2.0), rel=1e-3)
        assert not pre

    def test_short_run_flagged(self):
        traj = integrate_affine(reference_params(), 20.0, rel_tol=1e-9)
        resc = build_rescaling(traj)
        mu1, pre = estimate_mu1(traj, resc)
        assert pre
        assert mu1 > 0


class TestExponents:
    def test_direct_substitution(self):
        e = exponents(1.5, 1.0, 1.0)
        assert e.delta == pytest.approx(1.0)
        assert e.mu0 == pytest.approx(0.5)

    def test_alpha3(self):
        e = exponents(3.0, 0.5, 2.0)
        assert e.delta == pytest.approx(0.5)
        assert e.mu0 == pytest.approx(0.5)

    def test_boundary_alpha1(self):
        e = exponents(1.0, 1.9, 1.0)  # min(3, 2) = 2 bound
        assert e.sigma == 1.9

    def test_out_of_range(self):
        with pytest.raises(SigmaOutOfRange):
            exponents(3.0, 1.5, 1.0)  # min(1, 2) = 1
        with pytest.raises(SigmaOutOfRange):
            exponents(1.5, 0.0, 1.0)

    def test_default_sigma_centers(self):
        assert default_sigma(1.5) == pytest.approx(1.0)
        assert default_sigma(3.0) == pytest.approx(0.5)
        assert default_sigma(0.5) == pytest.approx(1.0)
