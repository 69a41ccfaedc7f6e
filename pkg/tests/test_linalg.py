import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from monet import (ConfigError, DimensionError, NumericalError, ProjectionBasis,
                   distance_correlation, metadata_leakage, orthonormal_basis, pca_2d, project)
from monet.linalg import cosine_distances

import oracles

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def rand(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


class TestOrthonormalBasis:
    def test_standard_column(self):
        Z = np.zeros((5, 1))
        Z[0, 0] = 1.0
        B = orthonormal_basis(Z)
        assert B.rank == 1
        np.testing.assert_allclose(np.abs(B.basis[:, 0]), Z[:, 0], atol=1e-15)

    def test_duplicate_columns_rank_one(self):
        z = rand(8, 1)
        assert orthonormal_basis(np.hstack([z, z])).rank == 1

    def test_random_is_orthonormal(self):
        B = orthonormal_basis(rand(50, 2))
        assert B.rank == 2
        assert np.max(np.abs(B.basis.T @ B.basis - np.eye(2))) <= 1e-10

    def test_spans_column_space(self):
        Z = rand(20, 3, seed=1)
        Q = orthonormal_basis(Z).basis
        np.testing.assert_allclose(Q @ (Q.T @ Z), Z, atol=1e-12)

    def test_zero_matrix_gives_identity_projection(self, caplog):
        B = orthonormal_basis(np.zeros((4, 2)))
        assert B.rank == 0 and "rank 0" in caplog.text
        W = rand(4, 3)
        assert np.array_equal(project(W, B), W)

    def test_lambda_range(self):
        with pytest.raises(ConfigError):
            orthonormal_basis(rand(4, 1), lam=1.5)

    def test_non_finite(self):
        Z = rand(4, 1)
        Z[0, 0] = np.nan
        with pytest.raises(NumericalError):
            orthonormal_basis(Z)

    def test_rank_tolerance_drops_tiny_directions(self):
        Z = np.hstack([rand(10, 1), 1e-12 * rand(10, 1, seed=3)])
        assert orthonormal_basis(Z, rank_tol=1e-8).rank == 1
        assert orthonormal_basis(Z, rank_tol=1e-14).rank == 2


class TestProject:
    def test_coordinate_projection(self):
        Z = np.zeros((4, 1))
        Z[1, 0] = 2.0
        W = rand(4, 3)
        expected = W.copy()
        expected[1] = 0.0
        np.testing.assert_allclose(project(W, orthonormal_basis(Z)), expected, atol=1e-15)

    def test_lambda_zero_is_bitwise_identity(self):
        W = rand(30, 4)
        out = project(W, orthonormal_basis(rand(30, 2), lam=0.0))
        assert out.tobytes() == W.tobytes()

    def test_matches_dense_projector(self):
        Z, W = rand(12, 2, seed=1), rand(12, 5, seed=2)
        for lam in (0.3, 1.0):
            np.testing.assert_allclose(project(W, orthonormal_basis(Z, lam=lam)),
                                       oracles.projector(Z, lam) @ W, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            project(rand(5, 2), orthonormal_basis(rand(6, 1)))

    @settings(max_examples=40)
    @given(arrays(np.float64, (9, 2), elements=finite), arrays(np.float64, (9, 3), elements=finite),
           st.floats(0, 1))
    def test_contraction(self, Z, W, lam):
        B = orthonormal_basis(Z, lam=lam)
        assert np.linalg.norm(project(W, B)) <= np.linalg.norm(W) * (1 + 1e-12) + 1e-12

    @settings(max_examples=40)
    @given(arrays(np.float64, (9, 2), elements=finite), arrays(np.float64, (9, 3), elements=finite))
    def test_idempotent_and_orthogonal_at_one(self, Z, W):
        B = orthonormal_basis(Z)
        once = project(W, B)
        assert np.max(np.abs(project(once, B) - once)) <= 1e-10 * max(1.0, np.abs(W).max())
        if B.rank == Z.shape[1]:
            scale = np.linalg.norm(Z) * np.linalg.norm(W)
            assert np.linalg.norm(Z.T @ once) <= 1e-8 * scale + 1e-300


class TestLeakage:
    def test_two_by_two(self):
        assert metadata_leakage(np.eye(2), np.array([[1.0, 1.0], [1.0, -1.0]])) == 4.0

    def test_orthogonal_is_zero(self):
        Z = np.array([[1.0], [1.0], [0.0]])
        W = np.array([[1.0, 2.0], [-1.0, -2.0], [5.0, 3.0]])
        assert metadata_leakage(Z, W) == 0.0

    def test_projection_removes_leakage(self):
        for seed in range(5):
            Z, W = rand(40, 2, seed=seed), rand(40, 6, seed=seed + 10)
            Wp = project(W, orthonormal_basis(Z))
            bound = 1e-8 * np.linalg.norm(Z) ** 2 * np.linalg.norm(W) ** 2
            assert metadata_leakage(Z, Wp) <= bound

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            metadata_leakage(rand(3, 1), rand(4, 1))


class TestPCA:
    def test_planar_points_keep_distances(self):
        plane = rand(25, 2)
        frame = np.linalg.qr(rand(6, 2, seed=1))[0]
        W = plane @ frame.T + 3.0
        P = pca_2d(W)
        D = np.linalg.norm(W[:, None] - W[None], axis=-1)
        Dp = np.linalg.norm(P[:, None] - P[None], axis=-1)
        np.testing.assert_allclose(Dp, D, atol=1e-8)

    def test_identical_points(self):
        assert not pca_2d(np.ones((5, 3))).any()

    def test_variance_order_and_centering(self):
        P = pca_2d(rand(100, 5))
        assert P[:, 0].var() >= P[:, 1].var()
        np.testing.assert_allclose(P.mean(axis=0), 0.0, atol=1e-12)

    def test_sign_convention_is_stable(self):
        W = rand(30, 4)
        np.testing.assert_array_equal(pca_2d(W), pca_2d(W.copy()))
        # flipping the input flips the data but not the chosen directions
        np.testing.assert_allclose(pca_2d(-W), -pca_2d(W), atol=1e-12)

    def test_errors(self):
        with pytest.raises(DimensionError):
            pca_2d(rand(4, 1))
        with pytest.raises(DimensionError):
            pca_2d(rand(1, 3))


class TestDistanceCorrelation:
    def test_self_and_scale(self):
        W = rand(20, 4)
        assert distance_correlation(W, W) == pytest.approx(1.0)
        assert distance_correlation(W, 3 * W) == pytest.approx(1.0)

    def test_against_brute_force(self):
        A, B = rand(15, 3, seed=1), rand(15, 5, seed=2)
        i, j = np.triu_indices(15, k=1)
        expected = oracles.pearson(cosine_distances(A)[i, j], cosine_distances(B)[i, j])
        assert distance_correlation(A, B) == pytest.approx(expected, abs=1e-12)

    def test_sampled_pairs_are_seeded(self):
        A, B = rand(50, 3, seed=1), rand(50, 3, seed=2)
        r1 = distance_correlation(A, A + 0.1 * B, sample_pairs=300, seed=4)
        assert r1 == distance_correlation(A, A + 0.1 * B, sample_pairs=300, seed=4)
        assert r1 == pytest.approx(distance_correlation(A, A + 0.1 * B), abs=0.05)

    def test_errors(self):
        W = rand(5, 2)
        with pytest.raises(DimensionError):
            distance_correlation(W, rand(6, 2))
        with pytest.raises(DimensionError):
            distance_correlation(W[:2], W[:2])
        with pytest.raises(ConfigError):
            distance_correlation(W, W, sample_pairs=1)
        with pytest.raises(NumericalError):
            distance_correlation(np.ones((4, 2)), W[:4])
        zero = W.copy()
        zero[0] = 0
        with pytest.raises(NumericalError):
            distance_correlation(zero, W)


def test_projection_basis_fields():
    B = ProjectionBasis(np.eye(3)[:, :1], 1, 1e-8, 0.5)
    assert B.n == 3 and B.lam == 0.5
