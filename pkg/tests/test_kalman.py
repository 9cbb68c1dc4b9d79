"""
Unit tests for kalman.py
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import KalmanConditionError, ParameterError
from src.kalman import (
    analyze_structure,
    characteristic_exponents,
    check_invariants,
    require_kalman,
    weight_matrix,
)
from src.matops import psd_sqrt


@pytest.fixture
def kolmogorov():
    """Kolmogorov pair: B = [[0, 1], [0, 0]], Q = diag(0, 1)."""
    return np.array([[0.0, 1.0], [0.0, 0.0]]), psd_sqrt(np.diag([0.0, 1.0]))


class TestAnalyzeStructure:
    """Tests for analyze_structure."""

    def test_kolmogorov_has_r_one(self, kolmogorov):
        ks = analyze_structure(*kolmogorov)
        assert ks.holds
        assert ks.r == 1
        np.testing.assert_allclose(ks.proj[0], np.diag([0.0, 1.0]), atol=1e-12)
        np.testing.assert_allclose(ks.proj[1], np.eye(2), atol=1e-12)

    def test_kolmogorov_increments(self, kolmogorov):
        """Test that the increments split R^2 into the velocity and position axes."""
        ks = analyze_structure(*kolmogorov)
        np.testing.assert_allclose(ks.incr[0], np.diag([0.0, 1.0]), atol=1e-12)
        np.testing.assert_allclose(ks.incr[1], np.diag([1.0, 0.0]), atol=1e-12)

    def test_nondegenerate_diffusion_has_r_zero(self):
        ks = analyze_structure(np.zeros((3, 3)), psd_sqrt(np.eye(3)))
        assert ks.r == 0
        assert ks.depth == 0

    def test_chain_of_three(self):
        B = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        ks = analyze_structure(B, psd_sqrt(np.diag([0.0, 0.0, 1.0])))
        assert ks.r == 2
        assert list(ks.ranks) == [1, 2, 3]

    def test_failing_condition_is_reported(self):
        """Test that a stalled flag is a verdict, not an exception."""
        ks = analyze_structure(np.zeros((2, 2)), psd_sqrt(np.diag([0.0, 1.0])))
        assert not ks.holds
        assert ks.r is None
        assert len(ks.proj) == 2

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ParameterError):
            analyze_structure(np.zeros((2, 2)), psd_sqrt(np.eye(3)))

    def test_to_dict(self, kolmogorov):
        data = analyze_structure(*kolmogorov).to_dict()
        assert data["r"] == 1
        assert data["holds"] is True
        assert len(data["projections"]) == 2

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.integers(min_value=-3, max_value=3), min_size=9, max_size=9),
        st.integers(min_value=0, max_value=2),
    )
    def test_projection_algebra(self, entries, zeros):
        """Test idempotence and nesting of the flag projections for integer drifts."""
        B = np.array(entries, dtype=float).reshape(3, 3)
        Q = psd_sqrt(np.diag([0.0] * zeros + [1.0] * (3 - zeros)))
        ks = analyze_structure(B, Q)
        check_invariants(ks)
        for P in ks.proj:
            np.testing.assert_allclose(P @ P, P, atol=1e-10)
        for lower, upper in zip(ks.proj, ks.proj[1:]):
            np.testing.assert_allclose(lower @ upper, lower, atol=1e-10)


class TestRequireKalman:
    """Tests for require_kalman."""

    def test_returns_r(self, kolmogorov):
        assert require_kalman(analyze_structure(*kolmogorov), "test") == 1

    def test_raises_with_purpose(self):
        ks = analyze_structure(np.zeros((2, 2)), psd_sqrt(np.diag([0.0, 1.0])))
        with pytest.raises(KalmanConditionError) as exc_info:
            require_kalman(ks, "Gevrey scan")
        assert "Gevrey scan" in str(exc_info.value)
        assert exc_info.value.code == "KALMAN_FALSE"


class TestCharacteristicExponents:
    """Tests for characteristic_exponents."""

    def test_kolmogorov_exponents(self, kolmogorov):
        """Test gamma = 5/3, m = 5/2 and cost exponent 5 at s = 3/4."""
        table = characteristic_exponents(analyze_structure(*kolmogorov), 0.75)
        assert table.r == 1
        assert table.gamma == pytest.approx(5 / 3)
        assert table.dissipation_exponent == pytest.approx(2.5)
        assert table.observability_exponent == pytest.approx(5.0)
        assert [row.smoothing_exponent for row in table.rows] == pytest.approx([2 / 3, 5 / 3])
        assert [row.subelliptic_order for row in table.rows] == pytest.approx([1.5, 0.6])

    def test_cost_exponent_undefined_at_half(self, kolmogorov):
        """Test that 2s = 1 leaves the cost exponent undefined."""
        table = characteristic_exponents(analyze_structure(*kolmogorov), 0.5)
        assert table.observability_exponent is None
        assert table.to_dict()["observability_exponent"] == "undefined"

    def test_non_positive_s_raises(self, kolmogorov):
        with pytest.raises(ParameterError):
            characteristic_exponents(analyze_structure(*kolmogorov), 0.0)


class TestWeightMatrix:
    """Tests for weight_matrix."""

    def test_projection_form(self, kolmogorov):
        B, Q = kolmogorov
        ks = analyze_structure(B, Q)
        np.testing.assert_allclose(weight_matrix(ks, B, Q, 0, False), ks.proj[0])

    def test_matrix_form(self, kolmogorov):
        """Test W_1 = Q^{1/2} B^T."""
        B, Q = kolmogorov
        ks = analyze_structure(B, Q)
        np.testing.assert_allclose(weight_matrix(ks, B, Q, 1, True), Q.sqrt @ B.T, atol=1e-15)

    def test_index_out_of_range(self, kolmogorov):
        B, Q = kolmogorov
        with pytest.raises(ParameterError):
            weight_matrix(analyze_structure(B, Q), B, Q, 2, False)
