import numpy as np
import pytest

from affinegas.errors import (
    NonPositiveDeterminant,
    NotPositiveDefinite,
    NotSymmetric,
    SingularMatrix,
)
from affinegas.tensor import det3, mat3_kinematics, polar_split, sym_eig3


def rotation(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis /= np.linalg.norm(axis)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


class TestMat3Kinematics:
    def test_identity(self):
        d, inv, cof = mat3_kinematics(np.eye(3))
        assert d == 1.0
        assert np.allclose(inv, np.eye(3))
        assert np.allclose(cof, np.eye(3))

    def test_diagonal(self):
        d, inv, cof = mat3_kinematics(np.diag([2.0, 2.0, 2.0]))
        assert d == pytest.approx(8.0)
        assert np.allclose(inv, np.diag([0.5, 0.5, 0.5]))
        assert np.allclose(cof, np.diag([4.0, 4.0, 4.0]))

    def test_adjugate_oracle(self):
        # independent oracle: inverse entries are signed 2x2 minors over det
        rng = np.random.default_rng(7)
        for _ in range(50):
            m = rng.normal(size=(3, 3)) + 2.0 * np.eye(3)
            d, inv, cof = mat3_kinematics(m)
            adj = np.empty((3, 3))
            for i in range(3):
                for j in range(3):
                    minor = np.delete(np.delete(m, j, axis=0), i, axis=1)
                    adj[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
            assert np.allclose(inv, adj / d, rtol=1e-12, atol=1e-14)
            assert np.max(np.abs(m @ inv - np.eye(3))) < 1e-12 * np.linalg.norm(m)
            assert np.allclose(cof, d * inv.T)

    def test_singular_raises(self):
        m = np.ones((3, 3))
        with pytest.raises(SingularMatrix):
            mat3_kinematics(m)


class TestSymEig3:
    def test_identity(self):
        e = sym_eig3(np.eye(3))
        assert np.allclose(e.eigenvalues, 1.0)
        assert np.allclose(e.reconstruct(), np.eye(3))

    def test_diagonal_sorted(self):
        e = sym_eig3(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(e.eigenvalues, [3.0, 2.0, 1.0])
        assert np.allclose(np.abs(e.rotation), np.eye(3), atol=1e-12)

    def test_construct_then_decompose(self):
        r = rotation([1.0, 2.0, 0.5], 0.7)
        s = r @ np.diag([5.0, 1.0, 1.0]) @ r.T
        e = sym_eig3(s)
        assert np.allclose(e.eigenvalues, [5.0, 1.0, 1.0], rtol=1e-12)
        assert np.max(np.abs(e.reconstruct() - s)) < 1e-12 * np.linalg.norm(s)

    def test_random_spd_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            q = rng.normal(size=(3, 3))
            s = q @ q.T + 0.5 * np.eye(3)
            e = sym_eig3(s)
            assert np.max(np.abs(e.reconstruct() - s)) < 1e-12 * np.linalg.norm(s)
            p = e.rotation
            assert np.max(np.abs(p @ p.T - np.eye(3))) < 1e-12
            assert det3(p) == pytest.approx(1.0, abs=1e-12)
            assert np.all(np.diff(e.eigenvalues) <= 1e-12)

    def test_not_symmetric(self):
        m = np.eye(3)
        m[0, 1] = 0.5
        with pytest.raises(NotSymmetric):
            sym_eig3(m)

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            sym_eig3(np.diag([1.0, 1.0, -2.0]))


class TestPolarSplit:
    def test_scaled_identity(self):
        mu, o = polar_split(2.0 * np.eye(3))
        assert mu == pytest.approx(2.0)
        assert np.allclose(o, np.eye(3))

    def test_diagonal(self):
        mu, o = polar_split(np.diag([1.0, 2.0, 4.0]))
        assert mu == pytest.approx(2.0)
        assert np.allclose(o, np.diag([0.5, 1.0, 2.0]))

    def test_det27(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
        m *= (27.0 / det3(m)) ** (1.0 / 3.0)
        mu, o = polar_split(m)
        assert mu == pytest.approx(3.0, rel=1e-12)
        assert det3(o) == pytest.approx(1.0, rel=1e-12)

    def test_unit_det_property(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            m = rng.normal(size=(3, 3)) + 2.5 * np.eye(3)
            if det3(m) <= 0:
                continue
            _, o = polar_split(m)
            assert det3(o) == pytest.approx(1.0, rel=1e-12)

    def test_negative_det_raises(self):
        with pytest.raises(NonPositiveDeterminant):
            polar_split(np.diag([-1.0, 1.0, 1.0]))
