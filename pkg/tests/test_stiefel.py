"""Manifold primitives: projections, retractions, distances."""

import numpy as np
import numpy.testing as npt
import pytest

from orthopt.stiefel import (
    RetractionError,
    StiefelPoint,
    TangentVector,
    dist_to_stiefel,
    orthogonality_residual,
    proj_tangent,
    qr_orthonormalize,
    retract_polar,
    retract_qr,
    riemannian_gradient,
)


def random_point(n, r, seed):
    rng = np.random.default_rng(seed)
    return StiefelPoint(qr_orthonormalize(rng.standard_normal((n, r))))


class TestStiefelPoint:
    def test_accepts_orthonormal(self):
        x = StiefelPoint(np.eye(4)[:, :2])
        assert x.orth_residual <= 1e-15
        assert x.shape == (4, 2)

    def test_rejects_nonorthonormal(self):
        with pytest.raises(ValueError, match="not orthonormal"):
            StiefelPoint(np.ones((3, 2)) * 0.5)

    def test_reorthonormalize(self):
        rng = np.random.default_rng(0)
        x = StiefelPoint(rng.standard_normal((5, 3)), reorthonormalize=True)
        assert x.orth_residual <= 1e-12

    def test_rejects_bad_shapes_and_values(self):
        with pytest.raises(ValueError):
            StiefelPoint(np.eye(2, 3))  # n < r
        with pytest.raises(ValueError):
            StiefelPoint(np.array([[np.nan], [0.0]]))

    def test_immutable(self):
        x = StiefelPoint(np.eye(3)[:, :2])
        with pytest.raises(ValueError):
            x.mat[0, 0] = 2.0


class TestTangentVector:
    def test_rejects_nontangent(self):
        x = StiefelPoint(np.eye(3)[:, :2])
        with pytest.raises(ValueError, match="not tangent"):
            TangentVector(x, np.eye(3)[:, :2])

    def test_scaling_preserves_base(self):
        x = random_point(5, 2, 1)
        v = proj_tangent(x, np.random.default_rng(2).standard_normal((5, 2)))
        w = -3.0 * v
        assert w.base is x
        npt.assert_allclose(w.dir, -3.0 * v.dir)


class TestProjTangent:
    def test_normal_directions_project_to_zero(self):
        x = StiefelPoint(np.eye(3)[:, :2])
        s = np.array([[1.0, 2.0], [2.0, 3.0]])
        v = proj_tangent(x, x.mat @ s)
        npt.assert_allclose(v.dir, np.zeros((3, 2)), atol=1e-14)

    def test_identity_on_tangent(self):
        x = random_point(6, 3, 3)
        rng = np.random.default_rng(4)
        v = proj_tangent(x, rng.standard_normal((6, 3)))
        w = proj_tangent(x, v.dir)
        npt.assert_allclose(w.dir, v.dir, atol=1e-13)

    def test_idempotent(self):
        x = random_point(8, 3, 5)
        z = np.random.default_rng(6).standard_normal((8, 3))
        once = proj_tangent(x, z).dir
        twice = proj_tangent(x, once).dir
        assert np.linalg.norm(twice - once) <= 1e-12

    def test_output_is_tangent(self):
        x = random_point(7, 4, 7)
        z = np.random.default_rng(8).standard_normal((7, 4))
        d = proj_tangent(x, z).dir
        assert np.linalg.norm(x.mat.T @ d + d.T @ x.mat) <= 1e-10

    def test_orthogonal_decomposition(self):
        # the removed component is orthogonal to every tangent direction
        rng = np.random.default_rng(9)
        for _ in range(20):
            x = StiefelPoint(qr_orthonormalize(rng.standard_normal((6, 3))))
            z = rng.standard_normal((6, 3))
            normal_part = z - proj_tangent(x, z).dir
            h = proj_tangent(x, rng.standard_normal((6, 3))).dir
            assert abs(np.sum(normal_part * h)) <= 1e-10

    def test_shape_mismatch(self):
        x = random_point(4, 2, 10)
        with pytest.raises(ValueError, match="shape"):
            proj_tangent(x, np.zeros((5, 2)))


class TestRiemannianGradient:
    def test_symmetric_pullback_vanishes(self):
        x = random_point(5, 3, 11)
        s = np.random.default_rng(12).standard_normal((3, 3))
        s = s + s.T
        g = riemannian_gradient(x, x.mat @ s)
        npt.assert_allclose(g.dir, np.zeros((5, 3)), atol=1e-13)

    def test_matches_proj_tangent_exactly(self):
        x = random_point(6, 2, 13)
        z = np.random.default_rng(14).standard_normal((6, 2))
        npt.assert_array_equal(riemannian_gradient(x, z).dir, proj_tangent(x, z).dir)


@pytest.mark.parametrize("retract", [retract_qr, retract_polar])
class TestRetractions:
    def test_zero_vector_is_identity(self, retract):
        x = random_point(5, 2, 15)
        v = TangentVector(x, np.zeros((5, 2)))
        assert retract(x, v) is x

    def test_result_orthonormal(self, retract):
        rng = np.random.default_rng(16)
        for _ in range(10):
            x = StiefelPoint(qr_orthonormalize(rng.standard_normal((6, 3))))
            v = proj_tangent(x, rng.standard_normal((6, 3)))
            y = retract(x, v)
            assert y.orth_residual <= 1e-12
            assert dist_to_stiefel(y.mat) <= 1e-12

    def test_first_order_agreement(self, retract):
        # ||R(t v) - (x + t v)|| / ||t v|| shrinks linearly with t
        x = random_point(8, 3, 17)
        v = proj_tangent(x, np.random.default_rng(18).standard_normal((8, 3)))
        v = v.scaled(1.0 / v.norm())
        ratios = []
        for t in (1e-1, 1e-2, 1e-3):
            y = retract(x, v.scaled(t))
            ratios.append(np.linalg.norm(y.mat - (x.mat + t * v.dir)) / t)
        assert ratios[0] > ratios[1] > ratios[2]
        # linear decay in t: each decade shrinks the ratio close to 10x
        assert 0.05 * ratios[0] <= ratios[1] <= 0.2 * ratios[0]
        assert 0.05 * ratios[1] <= ratios[2] <= 0.2 * ratios[1]

    def test_wrong_base_rejected(self, retract):
        x = random_point(5, 2, 19)
        y = random_point(5, 2, 20)
        v = proj_tangent(y, np.random.default_rng(21).standard_normal((5, 2)))
        with pytest.raises(ValueError, match="different point"):
            retract(x, v)

    def test_bounded_deviation_constants(self, retract):
        # ||R(v) - x|| <= c1 ||v|| and ||R(v) - (x + v)|| <= c2 ||v||^2,
        # with the constants fitted over 1000 random draws
        rng = np.random.default_rng(22)
        c1 = c2 = 0.0
        for _ in range(1000):
            x = StiefelPoint(qr_orthonormalize(rng.standard_normal((5, 2))))
            v = proj_tangent(x, rng.standard_normal((5, 2))).scaled(
                rng.uniform(0.01, 1.0)
            )
            nv = v.norm()
            y = retract(x, v)
            c1 = max(c1, np.linalg.norm(y.mat - x.mat) / nv)
            c2 = max(c2, np.linalg.norm(y.mat - (x.mat + v.dir)) / nv**2)
        assert c1 <= 2.0
        assert c2 <= 5.0


def test_retract_polar_hand_example():
    x = StiefelPoint(np.array([[1.0], [0.0]]))
    v = TangentVector(x, np.array([[0.0], [1.0]]))
    y = retract_polar(x, v)
    npt.assert_allclose(y.mat, np.array([[1.0], [1.0]]) / np.sqrt(2), atol=1e-15)


def test_qr_sign_convention_deterministic():
    rng = np.random.default_rng(23)
    m = rng.standard_normal((6, 3))
    q1 = qr_orthonormalize(m)
    q2 = qr_orthonormalize(m.copy())
    npt.assert_array_equal(q1, q2)
    # positive diagonal of R = Q^T M
    r = q1.T @ m
    assert np.all(np.diag(r) > 0)


def test_qr_rank_deficient_raises():
    with pytest.raises(RetractionError):
        qr_orthonormalize(np.ones((4, 2)))


class TestDistToStiefel:
    def test_zero_on_manifold(self):
        x = random_point(6, 3, 24)
        assert dist_to_stiefel(x.mat) <= 1e-12

    def test_scaled_identity(self):
        npt.assert_allclose(dist_to_stiefel(2.0 * np.eye(4)[:, :2]), np.sqrt(2.0))

    def test_gram_residual_sandwich(self):
        # dist <= ||X^T X - I|| <= (1 + sigma_max) dist on random matrices
        rng = np.random.default_rng(25)
        for _ in range(1000):
            x = rng.standard_normal((4, 2)) * rng.uniform(0.2, 2.0)
            d = dist_to_stiefel(x)
            res = orthogonality_residual(x)
            smax = np.linalg.norm(x, 2)
            assert d <= res + 1e-12
            assert res <= (1.0 + smax) * d + 1e-12
