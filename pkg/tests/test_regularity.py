"""
Unit tests for regularity.py
"""

import numpy as np
import pytest

from src.control import fractional_heat_model
from src.errors import KalmanConditionError, ParameterError
from src.field import gaussian_field
from src.kalman import analyze_structure
from src.matops import psd_sqrt
from src.models import Field, Grid, OUModel, SphereOptions
from src.regularity import (
    gevrey_scan,
    gramian_projection_scan,
    inequality_oracles,
    mst,
    mst_asymptotic_constant,
    mst_direction,
    mst_scan,
    multiplier_sup,
    sphere_sample,
    subelliptic_report,
)
from src.selftest import kolmogorov_model


FAST = SphereOptions(points=128, starts=2, max_iter=100)


def structure(model: OUModel):
    return analyze_structure(model.B, model.Q)


class TestSphereSample:
    """Tests for sphere_sample."""

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_points_are_unit(self, n):
        """Test that every sample has unit norm."""
        points = sphere_sample(n, 64)
        np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0, atol=1e-14)

    def test_one_dimension(self):
        """Test that the 0-sphere is {1, -1}."""
        np.testing.assert_array_equal(sphere_sample(1, 100), [[1.0], [-1.0]])


class TestMst:
    """Tests for the M^s_t functional."""

    def test_s_one_is_identically_one(self):
        """Test that the two averages coincide when s = 1."""
        model = kolmogorov_model(1.0)
        result = mst(model, structure(model), 0.5, FAST)
        assert result.value == pytest.approx(1.0, rel=1e-10)

    def test_heat_closed_form(self):
        """Test M^s_t = t^{1/2 - 1/(2s)} for B = 0, Q = 2^{1/s} I."""
        model = fractional_heat_model(2, 0.75)
        result = mst(model, structure(model), 0.3, FAST)
        assert result.value == pytest.approx(0.3 ** (-1 / 6), rel=1e-10)

    def test_direction_matches_closed_form(self):
        """Test sigma = (1, 0) against (1 + 2s)^{1/(2s)} / sqrt(3) t^{1/2 - 1/(2s)}."""
        model = kolmogorov_model(0.75)
        constant = mst_asymptotic_constant(model, np.array([1.0, 0.0]))
        assert constant == pytest.approx(2.5 ** (2 / 3) / np.sqrt(3))
        for t in (0.1, 1.0):
            value = mst_direction(model, structure(model), t, np.array([1.0, 0.0]))
            assert value == pytest.approx(constant * t ** (-1 / 6), rel=1e-8)

    def test_asymptotic_constant_of_diffused_direction(self):
        """Test that a direction seen by Q^{1/2} has the k = 0 constant 1."""
        model = kolmogorov_model(0.75)
        assert mst_asymptotic_constant(model, np.array([0.0, 1.0])) == pytest.approx(1.0)

    def test_requires_kalman(self):
        """Test that a failing rank condition is refused."""
        model = OUModel(B=np.zeros((2, 2)), Q=psd_sqrt(np.diag([0.0, 1.0])), s=0.75)
        with pytest.raises(KalmanConditionError):
            mst(model, structure(model), 0.5, FAST)

    def test_requires_positive_time(self):
        """Test that t = 0 is rejected."""
        model = kolmogorov_model(0.75)
        with pytest.raises(ParameterError):
            mst(model, structure(model), 0.0, FAST)

    def test_scan_slope(self):
        """Test the log-log slope 1/2 - 1/(2s) and the one-sided Jensen bound."""
        model = kolmogorov_model(0.75)
        report = mst_scan(model, structure(model), [0.1, 0.3, 1.0], SphereOptions(points=256, starts=4))
        assert report.slope == pytest.approx(-1 / 6, abs=0.02)
        assert report.extras["jensen_violations"] == []
        assert report.passed


class TestGramianProjection:
    """Tests for gramian_projection_scan."""

    @pytest.mark.parametrize("k,expected", [(0, -0.5), (1, -1.5)])
    def test_kolmogorov_rates(self, k, expected):
        """Test ||Pi_k e^{-tB^T} Q_t^{-1/2}|| ~ t^{-(1/2 + k)}."""
        model = kolmogorov_model(0.75)
        report = gramian_projection_scan(model, structure(model), k, [0.05, 0.1, 0.2, 0.4])
        assert report.slope == pytest.approx(expected, abs=1e-6)
        assert report.passed

    def test_index_out_of_range(self):
        """Test that k must not exceed r."""
        model = kolmogorov_model(0.75)
        with pytest.raises(ParameterError):
            gramian_projection_scan(model, structure(model), 2, [0.1, 0.2])


class TestMultiplierSup:
    """Tests for multiplier_sup."""

    def test_heat_against_dense_search(self):
        """Test sup (1 + rho^2) exp(-t rho^{3/2}) for the s = 3/4 heat model."""
        model = fractional_heat_model(1, 0.75)
        t = 0.5
        value = multiplier_sup(model, structure(model), np.eye(1), 2.0, t, FAST)
        rho = np.linspace(0.0, 50.0, 200001)
        reference = np.max((1 + rho ** 2) * np.exp(-t * rho ** 1.5))
        assert value == pytest.approx(reference, rel=1e-6)

    def test_zero_order_is_one(self):
        """Test that q = 0 gives the trivial bound."""
        model = kolmogorov_model(0.75)
        assert multiplier_sup(model, structure(model), np.eye(2), 0.0, 0.5, FAST) == 1.0


class TestGevreyScan:
    """Tests for gevrey_scan."""

    def test_heat_rate(self):
        """Test the worst-case rate -q/(2s) for the heat model at small times."""
        model = fractional_heat_model(1, 0.75)
        grid = Grid(L=(30.0,), N=(256,))
        report = gevrey_scan(model, structure(model), 0, 1.0, gaussian_field(grid),
                             [0.001, 0.002, 0.004, 0.008], options=FAST)
        assert report.rate.slope == pytest.approx(-2 / 3, abs=0.02)
        assert report.rate.passed
        assert len(report.data.values) == 4

    def test_rejects_index_above_r(self):
        """Test that k must lie in 0..r."""
        model = fractional_heat_model(1, 0.75)
        grid = Grid(L=(30.0,), N=(64,))
        with pytest.raises(ParameterError):
            gevrey_scan(model, structure(model), 1, 1.0, gaussian_field(grid), [0.1])

    def test_rejects_negative_order(self):
        """Test that q must be nonnegative."""
        model = fractional_heat_model(1, 0.75)
        grid = Grid(L=(30.0,), N=(64,))
        with pytest.raises(ParameterError):
            gevrey_scan(model, structure(model), 0, -1.0, gaussian_field(grid), [0.1])


class TestSubelliptic:
    """Tests for subelliptic_report."""

    def test_gaussians_are_stable(self):
        """Test finite ratios that do not move under refinement."""
        model = kolmogorov_model(0.75)
        grid = Grid(L=(20.0, 20.0), N=(64, 64))
        fields = [gaussian_field(grid, width=w) for w in (0.8, 1.2)]
        report = subelliptic_report(model, structure(model), fields)
        assert len(report.subelliptic_ratios) == 2
        assert report.excluded == []
        assert report.passed

    def test_boundary_mass_excludes_field(self):
        """Test that a field touching the boundary is excluded."""
        model = kolmogorov_model(0.75)
        grid = Grid(L=(20.0, 20.0), N=(64, 64))
        fields = [Field(grid, np.ones(grid.shape)), gaussian_field(grid)]
        report = subelliptic_report(model, structure(model), fields, check_resolution=False)
        assert [entry["index"] for entry in report.excluded] == [0]
        assert len(report.drift_ratios) == 1
        assert report.resolution_change is None


class TestInequalityOracles:
    """Tests for inequality_oracles."""

    def test_no_violations(self):
        """Test that the three inequalities hold on random samples."""
        report = inequality_oracles(500, seed=3)
        assert report.samples == 500
        assert report.total_violations == 0

    def test_rejects_empty_sample(self):
        """Test that at least one sample is required."""
        with pytest.raises(ParameterError):
            inequality_oracles(0)
