import warnings

import numpy as np
import pytest
from django.test import SimpleTestCase

from core.exceptions import AsymmetryExceedsTol, DimensionMismatch, NonSquare, RankDeficientWarning
from core.linalg.matlib import (
    as_matrix,
    block_diag,
    equality_residual,
    is_nsd,
    is_psd,
    jacobi_eigenvalues,
    least_squares,
    sym_eig_bounds,
    sym_eigvals,
    symmetrize,
    weighted_gram_norm_sq,
)


class SymmetricEigenTests(SimpleTestCase):
    """Eigenvalue bounds and definiteness checks."""

    def test_bounds_of_diagonal_matrix(self):
        """Test bounds of a diagonal matrix are its extreme entries."""
        bounds = sym_eig_bounds(np.diag([3.0, -1.0, 2.0]))
        self.assertAlmostEqual(bounds.lambda_min, -1.0)
        self.assertAlmostEqual(bounds.lambda_max, 3.0)

    def test_jacobi_matches_lapack(self):
        """Test cyclic Jacobi eigenvalues agree with LAPACK on random symmetric matrices."""
        rng = np.random.default_rng(7)
        for size in (2, 5, 12):
            X = rng.standard_normal((size, size))
            S = X + X.T
            np.testing.assert_allclose(
                sym_eigvals(S, method='jacobi'), sym_eigvals(S, method='lapack'), atol=1e-9
            )

    def test_jacobi_small_cases(self):
        """Test Jacobi on empty-like and zero matrices."""
        np.testing.assert_allclose(jacobi_eigenvalues(np.array([[4.0]])), [4.0])
        np.testing.assert_allclose(jacobi_eigenvalues(np.zeros((3, 3))), [0.0, 0.0, 0.0])

    def test_unknown_method(self):
        """Test an unknown eigenvalue backend is rejected."""
        with self.assertRaises(ValueError):
            sym_eigvals(np.eye(2), method='power')

    def test_non_square_rejected(self):
        """Test non-square input raises NonSquare."""
        with self.assertRaises(NonSquare):
            symmetrize(np.zeros((2, 3)))

    def test_asymmetry_rejected(self):
        """Test asymmetry above tolerance raises."""
        with self.assertRaises(AsymmetryExceedsTol):
            symmetrize(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_tiny_asymmetry_symmetrized(self):
        """Test asymmetry within tolerance is averaged away."""
        S = symmetrize(np.array([[1.0, 1.0 + 1e-12], [1.0, 1.0]]))
        self.assertEqual(S[0, 1], S[1, 0])

    def test_definiteness(self):
        """Test PSD/NSD classification with tolerance."""
        self.assertTrue(is_psd(np.diag([0.0, 1.0])))
        self.assertTrue(is_psd(np.diag([-1e-12, 1.0])))
        self.assertFalse(is_psd(np.diag([-1e-3, 1.0])))
        self.assertTrue(is_nsd(-np.eye(3)))
        self.assertFalse(is_nsd(np.eye(3)))

    def test_weighted_gram_norm(self):
        """Test ||sqrt(W) N||^2 equals lambda_max(N^T W N)."""
        N = np.array([[1.0], [1.0]])
        W = np.diag([2.0, 3.0])
        self.assertAlmostEqual(weighted_gram_norm_sq(N, W), 5.0)
        self.assertEqual(weighted_gram_norm_sq(np.zeros((2, 0)), W), 0.0)


class LeastSquaresTests(SimpleTestCase):
    """Exact, overdetermined and rank-deficient solves."""

    def test_exact_solution(self):
        """Test a consistent system is solved with zero residual."""
        A = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        X = np.array([[1.0], [-1.0]])
        result = least_squares(A, A @ X)
        np.testing.assert_allclose(result.X, X, atol=1e-12)
        self.assertLess(result.residual, 1e-12)
        self.assertFalse(result.rank_deficient)

    def test_rank_deficient_warns(self):
        """Test a rank-deficient matrix warns and returns the minimum-norm solution."""
        A = np.array([[1.0, 1.0], [1.0, 1.0]])
        B = np.array([[2.0], [2.0]])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            result = least_squares(A, B)
        self.assertTrue(any(issubclass(w.category, RankDeficientWarning) for w in caught))
        self.assertTrue(result.rank_deficient)
        np.testing.assert_allclose(result.X, [[1.0], [1.0]], atol=1e-12)

    def test_row_mismatch(self):
        """Test mismatched row counts are rejected."""
        with self.assertRaises(DimensionMismatch):
            least_squares(np.eye(2), np.ones((3, 1)))


class MatrixHelperTests(SimpleTestCase):

    def test_as_matrix_shapes(self):
        """Test scalars and vectors are promoted to 2-D."""
        self.assertEqual(as_matrix(2.0).shape, (1, 1))
        self.assertEqual(as_matrix([1, 2, 3]).shape, (3, 1))
        with self.assertRaises(DimensionMismatch):
            as_matrix(np.zeros((2, 2, 2)))
        with self.assertRaises(ValueError):
            as_matrix([[np.nan]])

    def test_equality_residual_threshold_scales(self):
        """Test the equality threshold scales with the largest entry."""
        residual, threshold = equality_residual(np.array([[100.0]]), np.array([[100.0 + 1e-8]]))
        self.assertAlmostEqual(threshold, 1e-7)
        self.assertLess(residual, threshold)

    def test_block_diag(self):
        """Test block-diagonal assembly of rectangular blocks."""
        B = block_diag(np.ones((2, 1)), [[3.0]])
        self.assertEqual(B.shape, (3, 2))
        self.assertEqual(B[2, 1], 3.0)
        self.assertEqual(B[2, 0], 0.0)


@pytest.mark.parametrize('size', [1, 3, 8])
def test_psd_gram_matrices(size):
    """Test Gram matrices are classified PSD by both backends."""
    rng = np.random.default_rng(size)
    X = rng.standard_normal((size, size))
    for method in ('lapack', 'jacobi'):
        assert is_psd(X @ X.T, method=method)
