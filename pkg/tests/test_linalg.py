"""SVD, numerical rank, and condition number contracts."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from attncond.errors import ValidationError
from attncond.linalg import (
    DEFAULT_RANK_TOL,
    as_matrix,
    condition_number,
    numerical_rank,
    svd,
)

from oracles import closed_form_kappa


def random_shapes(rng, count, max_rows=64, max_cols=256):
    for _ in range(count):
        yield int(rng.integers(1, max_rows + 1)), int(rng.integers(1, max_cols + 1))


class TestValidation:
    def test_rejects_non_2d(self):
        with pytest.raises(ValidationError):
            as_matrix(np.zeros(3))
        with pytest.raises(ValidationError):
            as_matrix(np.zeros((2, 2, 2)))

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            as_matrix(np.zeros((0, 4)))

    def test_rejects_non_finite(self):
        bad = np.ones((2, 2))
        bad[1, 1] = np.nan
        with pytest.raises(ValidationError):
            svd(bad)
        bad[1, 1] = np.inf
        with pytest.raises(ValidationError):
            numerical_rank(bad)

    def test_rank_tol_must_be_positive(self):
        with pytest.raises(ValidationError):
            condition_number(np.eye(2), rank_tol=0.0)
        with pytest.raises(ValidationError):
            numerical_rank(np.eye(2), rank_tol=-1e-9)


class TestSvd:
    def test_identity(self):
        res = svd(np.eye(3))
        assert_allclose(res.singular_values, [1.0, 1.0, 1.0], atol=1e-14)

    def test_diagonal(self):
        res = svd(np.diag([3.0, 1.0]))
        assert_allclose(res.singular_values, [3.0, 1.0], atol=1e-14)

    def test_reconstruction_seeded_4x6(self):
        a = np.random.default_rng(42).standard_normal((4, 6))
        res = svd(a)
        rebuilt = res.left_vectors @ np.diag(res.singular_values) @ res.right_vectors.T
        sigma1 = res.singular_values[0]
        assert np.max(np.abs(rebuilt - a)) <= 1e-10 * sigma1

    @pytest.mark.parametrize("seed", range(8))
    def test_reconstruction_and_orthonormality_random_shapes(self, seed):
        rng = np.random.default_rng(1000 + seed)
        for rows, cols in random_shapes(rng, 6):
            a = rng.standard_normal((rows, cols))
            res = svd(a)
            k = min(rows, cols)
            assert res.singular_values.shape == (k,)
            assert res.left_vectors.shape == (rows, k)
            assert res.right_vectors.shape == (cols, k)
            s = res.singular_values
            assert np.all(s >= 0.0)
            assert np.all(np.diff(s) <= 0.0)
            sigma1 = s[0]
            rebuilt = res.left_vectors @ np.diag(s) @ res.right_vectors.T
            assert np.max(np.abs(rebuilt - a)) <= 1e-10 * max(sigma1, 1e-300)
            gram_u = res.left_vectors.T @ res.left_vectors
            gram_v = res.right_vectors.T @ res.right_vectors
            assert np.max(np.abs(gram_u - np.eye(k))) <= 1e-10
            assert np.max(np.abs(gram_v - np.eye(k))) <= 1e-10

    @pytest.mark.parametrize("shape", [(5, 5), (9, 4), (4, 9), (32, 128)])
    def test_matches_lapack_singular_values(self, shape):
        # Independent oracle route: LAPACK via numpy, used only in tests.
        a = np.random.default_rng(7).standard_normal(shape)
        ours = svd(a).singular_values
        ref = np.linalg.svd(a, compute_uv=False)
        assert_allclose(ours, ref, rtol=1e-12, atol=1e-12 * ref[0])

    def test_rank_deficient_orthonormal_completion(self):
        rng = np.random.default_rng(3)
        a = np.outer(rng.standard_normal(6), rng.standard_normal(6))
        res = svd(a)
        gram_u = res.left_vectors.T @ res.left_vectors
        gram_v = res.right_vectors.T @ res.right_vectors
        assert np.max(np.abs(gram_u - np.eye(6))) <= 1e-10
        assert np.max(np.abs(gram_v - np.eye(6))) <= 1e-10

    def test_zero_matrix(self):
        res = svd(np.zeros((3, 5)))
        assert_allclose(res.singular_values, np.zeros(3))
        gram_u = res.left_vectors.T @ res.left_vectors
        assert_allclose(gram_u, np.eye(3), atol=1e-14)

    def test_deterministic(self):
        a = np.random.default_rng(11).standard_normal((8, 8))
        r1 = svd(a)
        r2 = svd(a)
        assert np.array_equal(r1.singular_values, r2.singular_values)
        assert np.array_equal(r1.left_vectors, r2.left_vectors)
        assert np.array_equal(r1.right_vectors, r2.right_vectors)


class TestNumericalRank:
    def test_zero_matrix(self):
        assert numerical_rank(np.zeros((3, 3))) == 0

    def test_identity(self):
        assert numerical_rank(np.eye(4)) == 4

    def test_outer_product_rank_one(self):
        rng = np.random.default_rng(5)
        a = np.outer(rng.standard_normal(8), rng.standard_normal(8))
        assert numerical_rank(a) == 1

    def test_constructed_rank(self):
        rng = np.random.default_rng(17)
        for rank in (1, 2, 5):
            left = rng.standard_normal((12, rank))
            right = rng.standard_normal((rank, 20))
            assert numerical_rank(left @ right) == rank


class TestConditionNumber:
    def test_identity(self):
        assert condition_number(np.eye(5)) == 1.0

    def test_diagonal_ratio(self):
        assert math.isclose(condition_number(np.diag([4.0, 2.0])), 2.0, rel_tol=1e-14)

    def test_zero_matrix_is_infinite(self):
        assert condition_number(np.zeros((3, 3))) == math.inf

    def test_rank_deficient_is_infinite(self):
        rng = np.random.default_rng(23)
        a = np.outer(rng.standard_normal(6), rng.standard_normal(6))
        assert condition_number(a) == math.inf

    def test_gaussian_mean_matches_closed_form(self):
        # Oracle: closed form for 32 x 1024, frozen band 1.430 +/- 0.05.
        expected = closed_form_kappa(32, 1024)
        assert math.isclose(expected, 1.4295, abs_tol=1e-3)
        rng = np.random.default_rng(2024)
        kappas = [condition_number(rng.standard_normal((32, 1024))) for _ in range(100)]
        assert all(math.isfinite(k) for k in kappas)
        assert abs(np.mean(kappas) - expected) <= 0.05

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_results_at_least_one(self, seed):
        rng = np.random.default_rng(300 + seed)
        for rows, cols in random_shapes(rng, 5, max_rows=20, max_cols=20):
            kappa = condition_number(rng.standard_normal((rows, cols)))
            assert kappa >= 1.0 or kappa == math.inf

    def test_scale_invariance(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            a = rng.standard_normal((int(rng.integers(2, 24)), int(rng.integers(2, 24))))
            scale = float(rng.uniform(1e-6, 1e6)) * float(rng.choice([-1.0, 1.0]))
            base = condition_number(a)
            scaled = condition_number(scale * a)
            assert abs(scaled - base) <= 1e-9 * base

    def test_transpose_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            a = rng.standard_normal((int(rng.integers(2, 32)), int(rng.integers(2, 32))))
            base = condition_number(a)
            flipped = condition_number(a.T)
            assert abs(flipped - base) <= 1e-9 * base
