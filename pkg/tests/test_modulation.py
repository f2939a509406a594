import math

import numpy as np
import pytest

from affinegas.affine import AffineParams, AffineTrajectory, integrate_affine
from affinegas.errors import InsufficientFrames
from affinegas.modulation import FrameTrack, frame_at, frames_to_csv, verify_frame_bounds
from affinegas.timeframe import build_rescaling, exponents, trajectory_spanning_tau


def anisotropic_params():
    a0dot = np.array([[1.0, 0.3, 0.0], [0.0, 1.2, 0.2], [0.1, 0.0, 0.8]])
    return AffineParams(A0=np.eye(3), A0dot=a0dot, Tbar=1.0, alpha=1.5)


def frozen_resc(c=1.0, t_end=10.0):
    ts = np.linspace(0.0, t_end, 21)
    As = np.array([c * np.eye(3) for _ in ts])
    Ads = np.array([np.zeros((3, 3)) for _ in ts])
    traj = AffineTrajectory.from_samples(ts, As, Ads)
    return traj, build_rescaling(traj)


class TestFrameAt:
    def test_isotropic(self):
        traj, resc = frozen_resc(c=2.0)
        f = frame_at(1.0, traj, resc)
        assert np.allclose(f.Lambda, np.eye(3), atol=1e-12)
        assert np.allclose(f.d, 1.0)
        assert np.max(np.abs(f.GammaStar)) < 1e-12
        assert np.max(np.abs(f.LambdaTau)) < 1e-10

    def test_diagonal_hand_value(self):
        # A = diag(1, 2, 4): Lambda = 8^(2/3) diag(1, 1/4, 1/16) = diag(4, 1, 1/4)
        ts = np.linspace(0.0, 1.0, 5)
        a = np.diag([1.0, 2.0, 4.0])
        traj = AffineTrajectory.from_samples(
            ts, np.array([a] * 5), np.array([np.zeros((3, 3))] * 5)
        )
        resc = build_rescaling(traj)
        f = frame_at(0.02, traj, resc)
        assert np.allclose(f.Lambda, np.diag([4.0, 1.0, 0.25]), atol=1e-12)
        assert np.linalg.det(f.Lambda) == pytest.approx(1.0, rel=1e-10)
        assert np.allclose(sorted(f.d, reverse=True), [4.0, 1.0, 0.25])

    def test_lambda_sl3_and_spd(self):
        traj, resc = trajectory_spanning_tau(anisotropic_params(), 3.0)
        for tau in (0.2, 1.0, 2.5):
            f = frame_at(tau, traj, resc)
            assert np.linalg.det(f.Lambda) == pytest.approx(1.0, rel=1e-10)
            assert np.max(np.abs(f.Lambda - f.Lambda.T)) < 1e-12
            assert np.min(np.linalg.eigvalsh(f.Lambda)) > 0
            assert abs(np.trace(f.GammaStar)) < 1e-10

    def test_lambda_tau_against_analytic(self):
        traj, resc = trajectory_spanning_tau(anisotropic_params(), 2.0)
        tau = 1.0
        f = frame_at(tau, traj, resc)
        t = resc.t_of_tau(tau)
        a, adot = traj.eval(t)
        ainv = np.linalg.inv(a)
        mu = np.linalg.det(a) ** (1.0 / 3.0)
        mu_t = mu / 3.0 * np.trace(adot @ ainv)
        lam = mu**2 * ainv @ ainv.T
        dlam_dt = (
            2.0 * mu * mu_t * ainv @ ainv.T
            - mu**2 * (ainv @ adot @ ainv @ ainv.T + ainv @ ainv.T @ adot.T @ ainv.T)
        )
        analytic = mu * dlam_dt  # d/dtau = mu d/dt
        assert np.max(np.abs(f.LambdaTau - analytic)) < 1e-6 * max(
            1.0, np.max(np.abs(analytic))
        )

    def test_lambda_inv_derivative_identity(self):
        traj, resc = trajectory_spanning_tau(anisotropic_params(), 2.0)
        tau, h = 1.0, 1e-4
        f = frame_at(tau, traj, resc)
        fp = frame_at(tau + h, traj, resc)
        fm = frame_at(tau - h, traj, resc)
        num = (fp.LambdaInv - fm.LambdaInv) / (2 * h)
        expect = -f.LambdaInv @ f.LambdaTau @ f.LambdaInv
        assert np.max(np.abs(num - expect)) < 1e-5

    def test_rotation_rate_antisymmetric_combination(self):
        traj, resc = trajectory_spanning_tau(anisotropic_params(), 2.0)
        tau, h = 0.8, 1e-5
        f = frame_at(tau, traj, resc)
        fp = frame_at(tau + h, traj, resc)
        fm = frame_at(tau - h, traj, resc)
        o_tau = (fp.O - fm.O) / (2 * h)
        m = o_tau.T @ f.O - f.O.T @ o_tau
        assert np.max(np.abs(m + m.T)) < 1e-12  # antisymmetric by construction

    def test_eigenframe_continuity(self):
        traj, resc = trajectory_spanning_tau(anisotropic_params(), 3.0)
        track = FrameTrack(traj, resc)
        prev = track.at(0.1)
        for tau in np.linspace(0.2, 3.0, 25):
            f = track.at(float(tau))
            assert np.max(np.abs(f.P - prev.P)) < 0.5  # no branch jumps
            prev = f

    def test_lambda_reconstruction(self):
        traj, resc = trajectory_spanning_tau(anisotropic_params(), 2.0)
        f = frame_at(1.3, traj, resc)
        recon = f.P.T @ np.diag(f.d) @ f.P
        assert np.max(np.abs(recon - f.Lambda)) < 1e-10


class TestFrameBounds:
    def _frames(self, tau_lo=0.25, tau_hi=5.0, n=30):
        traj, resc = trajectory_spanning_tau(anisotropic_params(), tau_hi)
        track = FrameTrack(traj, resc)
        return [track.at(float(t)) for t in np.linspace(tau_lo, tau_hi, n)], resc

    def test_frozen_constants(self):
        traj, resc = frozen_resc(t_end=40.0)
        track = FrameTrack(traj, resc)
        frames = [track.at(float(t)) for t in np.linspace(0.5, 30.0, 15)]
        rep = verify_frame_bounds(frames, exponents(1.5, 1.0, 1.0))
        assert rep.lambda_norm_const == pytest.approx(2.0 * math.sqrt(3.0), rel=1e-9)
        assert rep.eigen_sum_const == pytest.approx(6.0, rel=1e-9)
        assert rep.decay_ok  # decay items identically zero

    def test_expanding_decay(self):
        frames, resc = self._frames()
        exps = exponents(1.5, 1.0, math.sqrt(2.0))
        rep = verify_frame_bounds(frames, exps)
        assert rep.lambda_norm_const < 10.0
        assert rep.eigen_sum_const < 20.0
        assert rep.lambda_tau_rate <= -0.75 * exps.mu1
        assert rep.eigen_rate <= -0.75 * exps.mu1
        assert rep.decay_ok

    def test_quadratic_form_equivalence(self):
        frames, _ = self._frames()
        exps = exponents(1.5, 1.0, math.sqrt(2.0))
        rep = verify_frame_bounds(frames, exps)
        f = frames[-1]
        rng = np.random.default_rng(0)
        for _ in range(100):
            w = rng.normal(size=3)
            q = w @ f.LambdaInv @ w / (w @ w)
            assert rep.quad_lo - 1e-12 <= q <= rep.quad_hi + 1e-12
        assert rep.quad_lo == pytest.approx(1.0 / f.d.max())
        assert rep.quad_hi == pytest.approx(1.0 / f.d.min())

    def test_insufficient_frames(self):
        frames, _ = self._frames(n=5)
        with pytest.raises(InsufficientFrames):
            verify_frame_bounds(frames, exponents(1.5, 1.0, 1.0))


def test_frames_csv(tmp_path):
    traj, resc = trajectory_spanning_tau(anisotropic_params(), 1.0)
    track = FrameTrack(traj, resc)
    frames = [track.at(float(t)) for t in np.linspace(0.0, 1.0, 5)]
    path = tmp_path / "frames.csv"
    frames_to_csv(frames, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,mu,d1,d2,d3,normLambdaTau,normGammaStar"
    assert len(lines) == 6
