"""
Unit tests for matops.py
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import MatrixError, MatrixOverflowError, NotPsdError, QuadratureError
from src.kalman import analyze_structure
from src.matops import (
    as_square_matrix,
    gramian,
    kernel_basis,
    mat_exp,
    numerical_rank,
    psd_sqrt,
    range_basis,
)


class TestAsSquareMatrix:
    """Tests for as_square_matrix."""

    def test_accepts_nested_lists(self):
        matrix = as_square_matrix([[1, 2], [3, 4]])
        assert matrix.dtype == float
        assert matrix.shape == (2, 2)

    def test_rejects_rectangular(self):
        with pytest.raises(MatrixError) as exc_info:
            as_square_matrix([[1, 2, 3], [4, 5, 6]], "B")
        assert "B must be square" in str(exc_info.value)

    def test_rejects_non_finite(self):
        with pytest.raises(MatrixError):
            as_square_matrix([[1.0, np.nan], [0.0, 1.0]])


class TestMatExp:
    """Tests for mat_exp."""

    def test_zero_matrix_gives_identity(self):
        np.testing.assert_allclose(mat_exp(np.zeros((3, 3)), 2.0), np.eye(3), atol=1e-15)

    def test_nilpotent_drift(self):
        B = np.array([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(mat_exp(B, -0.7), [[1.0, -0.7], [0.0, 1.0]], atol=1e-15)

    def test_diagonal(self):
        result = mat_exp(np.diag([1.0, -2.0]), 0.5)
        np.testing.assert_allclose(result, np.diag([np.exp(0.5), np.exp(-1.0)]), rtol=1e-14)

    def test_overflow_raises(self):
        """Test that e^{1000} is refused instead of returning inf."""
        with pytest.raises(MatrixOverflowError) as exc_info:
            mat_exp(1000.0 * np.eye(2))
        assert exc_info.value.code == "MATRIX_OVERFLOW"

    def test_non_finite_time_raises(self):
        with pytest.raises(MatrixError):
            mat_exp(np.eye(2), np.inf)


class TestPsdSqrt:
    """Tests for psd_sqrt."""

    def test_diagonal_root(self):
        root = psd_sqrt(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(root.sqrt, np.diag([2.0, 3.0]), atol=1e-14)
        assert root.is_nonsingular()

    def test_singular_matrix(self):
        root = psd_sqrt(np.diag([0.0, 1.0]))
        assert not root.is_nonsingular()
        np.testing.assert_allclose(root.sqrt @ root.sqrt, root.base, atol=1e-14)

    def test_tiny_negative_eigenvalue_is_clamped(self):
        """Test that rounding-level negative eigenvalues are set to zero."""
        root = psd_sqrt(np.diag([-1e-20, 1.0]))
        assert root.eigenvalues.min() == 0.0

    def test_negative_eigenvalue_raises(self):
        with pytest.raises(NotPsdError):
            psd_sqrt(np.diag([-0.1, 1.0]))

    def test_asymmetric_raises(self):
        with pytest.raises(MatrixError) as exc_info:
            psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
        assert "not symmetric" in str(exc_info.value)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_root_squares_back(self, seed):
        """Test that the root is symmetric and squares back to the input."""
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((3, 3))
        Q = A @ A.T
        root = psd_sqrt(Q)
        np.testing.assert_allclose(root.sqrt @ root.sqrt, root.base, atol=1e-10 * max(1.0, np.abs(Q).max()))
        np.testing.assert_allclose(root.sqrt, root.sqrt.T, atol=1e-14)


class TestGramian:
    """Tests for gramian."""

    def test_kolmogorov_closed_form(self):
        """Test Q_t = [[t^3/3, -t^2/2], [-t^2/2, t]] for the Kolmogorov pair."""
        B = np.array([[0.0, 1.0], [0.0, 0.0]])
        t = 0.7
        result = gramian(B, psd_sqrt(np.diag([0.0, 1.0])), t)
        expected = np.array([[t ** 3 / 3, -t ** 2 / 2], [-t ** 2 / 2, t]])
        np.testing.assert_allclose(result.base, expected, atol=1e-12)
        assert result.is_nonsingular()

    def test_zero_drift_is_linear_in_t(self):
        Q = psd_sqrt(np.diag([1.0, 2.0]))
        result = gramian(np.zeros((2, 2)), Q, 0.3)
        np.testing.assert_allclose(result.base, 0.3 * Q.base, atol=1e-14)

    def test_non_kalman_pair_is_singular(self):
        result = gramian(np.zeros((2, 2)), psd_sqrt(np.diag([0.0, 1.0])), 1.0)
        assert not result.is_nonsingular()

    def test_non_positive_horizon_raises(self):
        with pytest.raises(MatrixError):
            gramian(np.zeros((1, 1)), psd_sqrt(np.eye(1)), 0.0)

    def test_no_convergence_raises(self):
        """Test that a fast rotation with a capped node budget reports divergence."""
        B = np.array([[0.0, 40.0], [-40.0, 0.0]])
        with pytest.raises(QuadratureError) as exc_info:
            gramian(B, psd_sqrt(np.eye(2) + np.diag([1.0, 0.0])), 10.0, nodes=2, max_doublings=1)
        assert "did not converge" in str(exc_info.value)


class TestRankHelpers:
    """Tests for rank, range and kernel helpers."""

    def test_rank_of_outer_product(self):
        v = np.array([[1.0], [2.0], [3.0]])
        assert numerical_rank(v @ v.T, 1e-12) == 1

    def test_range_and_kernel_are_complementary(self):
        M = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        U = range_basis(M, 1e-12)
        K = kernel_basis(M, 1e-12)
        assert U.shape == (3, 2)
        assert K.shape == (3, 1)
        np.testing.assert_allclose(U.T @ K, 0.0, atol=1e-14)
        np.testing.assert_allclose(np.abs(K[:, 0]), [0.0, 0.0, 1.0], atol=1e-14)

    def test_range_basis_with_forced_rank(self):
        """Test that an explicit rank truncates the basis."""
        M = np.diag([3.0, 2.0, 1.0])
        assert range_basis(M, 1e-12, rank=1).shape == (3, 1)


def controllable_pair(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Companion drift with noise on the last axis, rotated by a random orthogonal matrix."""
    c = rng.uniform(-1.0, 1.0, size=3)
    B = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], c])
    Q = np.diag([0.0, 0.0, rng.uniform(0.5, 2.0)])
    O, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    return O @ B @ O.T, O @ Q @ O.T


def decoupled_pair(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One axis evolves on its own and receives no noise; axes are permuted."""
    B = np.zeros((3, 3))
    B[0, 0] = rng.uniform(-1.0, 1.0)
    B[1:, 1:] = [[0.0, 1.0], rng.uniform(-1.0, 1.0, size=2)]
    Q = np.diag([0.0, 0.0, rng.uniform(0.5, 2.0)])
    P = np.eye(3)[rng.permutation(3)]
    return P @ B @ P.T, P @ Q @ P.T


class TestGramianMatchesKalman:
    """Tests that the Gramian is nonsingular exactly when the rank condition holds."""

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_controllable_pairs(self, seed):
        B, Q = controllable_pair(np.random.default_rng(seed))
        root = psd_sqrt(0.5 * (Q + Q.T))
        assert analyze_structure(B, root).holds
        assert gramian(B, root, 1.0).is_nonsingular()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_decoupled_pairs(self, seed):
        B, Q = decoupled_pair(np.random.default_rng(seed))
        root = psd_sqrt(Q)
        assert not analyze_structure(B, root).holds
        assert not gramian(B, root, 1.0).is_nonsingular()

