"""
Unit tests for field.py
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import FieldError
from src.field import (
    apply_fourier_weight,
    band_limited_field,
    boundary_mass_fraction,
    cube_cutoff,
    dft,
    gaussian_field,
    idft,
    japanese_bracket,
    l2_inner,
    l2_norm,
    l2_norm_on,
    refine_field,
    resample_linear_map,
    sample_field,
    wavepacket_field,
    weighted_spectral_norm,
    white_noise_field,
)
from src.models import Domain, Field, Grid


@pytest.fixture
def line():
    """One-dimensional grid on [-15, 15) with 256 points."""
    return Grid(L=(30.0,), N=(256,))


@pytest.fixture
def plane():
    """Two-dimensional grid on [-10, 10)^2 with 128^2 points."""
    return Grid(L=(20.0, 20.0), N=(128, 128))


class TestGrid:
    """Tests for the Grid model."""

    def test_spacing_and_volumes(self, plane):
        """Test derived spacings and cell volumes."""
        assert plane.spacing == (20.0 / 128, 20.0 / 128)
        assert plane.cell_volume == pytest.approx((20.0 / 128) ** 2)
        assert plane.frequency_cell_volume == pytest.approx((2 * np.pi / 20.0) ** 2)

    def test_axes_are_centered(self, line):
        """Test that the physical axis starts at -L/2 and includes 0."""
        axis = line.axes()[0]
        assert axis[0] == -15.0
        assert axis[128] == 0.0

    def test_frequency_axis(self, line):
        """Test the centered frequency lattice."""
        xi = line.frequency_axes()[0]
        assert xi[128] == 0.0
        assert xi[0] == pytest.approx(-np.pi * 256 / 30.0)

    def test_rejects_non_power_of_two(self):
        """Test that point counts must be powers of two."""
        with pytest.raises(FieldError):
            Grid(L=(1.0,), N=(100,))

    def test_rejects_dimension_above_four(self):
        """Test the dimension limit."""
        with pytest.raises(FieldError):
            Grid(L=(1.0,) * 5, N=(2,) * 5)

    def test_rejects_non_positive_length(self):
        """Test that box lengths must be positive."""
        with pytest.raises(FieldError):
            Grid(L=(0.0,), N=(8,))


class TestField:
    """Tests for the Field model."""

    def test_values_are_read_only(self, line):
        """Test that field values cannot be modified in place."""
        u = gaussian_field(line)
        with pytest.raises(ValueError):
            u.values[0] = 1.0

    def test_non_finite_values_rejected(self, line):
        """Test that NaN samples are rejected."""
        values = np.zeros(line.shape)
        values[3] = np.nan
        with pytest.raises(FieldError):
            Field(line, values)

    def test_sample_field_reports_location(self, line):
        """Test that a failing evaluator names the offending point."""
        with pytest.raises(FieldError) as exc_info:
            sample_field(line, lambda x: 1.0 / x[..., 0])
        assert "Non-finite sample" in str(exc_info.value)


class TestTransforms:
    """Tests for dft and idft."""

    def test_gaussian_transform(self, line):
        """Test that the DFT of a Gaussian matches sqrt(2 pi) exp(-xi^2 / 2)."""
        u_hat = dft(gaussian_field(line))
        xi = line.frequencies()[..., 0]
        expected = np.sqrt(2 * np.pi) * np.exp(-xi ** 2 / 2)
        np.testing.assert_allclose(u_hat.values, expected, atol=1e-12)
        assert u_hat.domain == Domain.SPECTRAL

    def test_round_trip(self, plane):
        """Test that idft inverts dft."""
        u = white_noise_field(plane, np.random.default_rng(1))
        back = idft(dft(u))
        np.testing.assert_allclose(back.values, u.values, atol=1e-12)

    def test_plancherel(self, plane):
        """Test ||dft(u)|| = (2 pi)^{n/2} ||u||."""
        u = white_noise_field(plane, np.random.default_rng(2))
        assert l2_norm(dft(u)) == pytest.approx((2 * np.pi) * l2_norm(u), rel=1e-12)

    def test_domain_checks(self, line):
        """Test that transforms refuse the wrong domain."""
        u = gaussian_field(line)
        with pytest.raises(FieldError):
            idft(u)
        with pytest.raises(FieldError):
            dft(dft(u))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_inner_product_is_preserved(self, seed):
        """Test <dft a, dft b> = 2 pi <a, b> in one dimension."""
        grid = Grid(L=(10.0,), N=(64,))
        rng = np.random.default_rng(seed)
        a = white_noise_field(grid, rng)
        b = white_noise_field(grid, rng)
        lhs = l2_inner(dft(a), dft(b))
        rhs = 2 * np.pi * l2_inner(a, b)
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


class TestWeights:
    """Tests for Fourier multipliers and weighted norms."""

    def test_unit_weight_is_identity(self, line):
        """Test that multiplying by one leaves the field unchanged."""
        u = gaussian_field(line)
        np.testing.assert_allclose(apply_fourier_weight(u, np.ones(line.shape)).values, u.values, atol=1e-12)

    def test_weighted_norm_of_unit_weight(self, plane):
        """Test that the spectral norm with unit weight is the physical norm."""
        u = gaussian_field(plane, width=1.5)
        assert weighted_spectral_norm(dft(u), np.ones(plane.shape)) == pytest.approx(l2_norm(u), rel=1e-12)

    def test_japanese_bracket(self):
        """Test <W xi>^q for W = identity."""
        weight = japanese_bracket(np.eye(2), 2.0)
        assert weight(np.array([[3.0, 4.0]]))[0] == pytest.approx(26.0)

    def test_cube_cutoff(self):
        """Test the cube indicator."""
        weight = cube_cutoff(1.0)
        np.testing.assert_array_equal(weight(np.array([[0.5, -1.0], [1.5, 0.0]])), [1.0, 0.0])

    def test_non_finite_weight_rejected(self, line):
        """Test that an infinite weight raises with its frequency."""
        u = gaussian_field(line)
        with pytest.raises(FieldError) as exc_info:
            apply_fourier_weight(u, lambda xi: 1.0 / xi[..., 0])
        assert "Non-finite Fourier weight" in str(exc_info.value)

    def test_restricted_norm(self, line):
        """Test that the restricted norm over every point is the full norm."""
        u = gaussian_field(line)
        assert l2_norm_on(u, np.ones(line.shape, dtype=bool)) == pytest.approx(l2_norm(u))
        with pytest.raises(FieldError):
            l2_norm_on(u, np.ones(3, dtype=bool))


class TestBoundary:
    """Tests for boundary diagnostics."""

    def test_constant_field_fraction(self, line):
        """Test that a constant carries 2 * 16 / 256 of its mass in the band."""
        u = Field(line, np.ones(line.shape))
        assert boundary_mass_fraction(u) == pytest.approx(0.125)

    def test_centered_gaussian_fraction(self, line):
        """Test that a narrow Gaussian has no boundary mass."""
        assert boundary_mass_fraction(gaussian_field(line)) < 1e-20

    def test_zero_field(self, line):
        """Test that the zero field has fraction zero."""
        assert boundary_mass_fraction(Field(line, np.zeros(line.shape))) == 0.0


class TestResample:
    """Tests for resample_linear_map."""

    def test_shear(self, plane):
        """Test a shear against the analytic composition."""
        u = gaussian_field(plane, width=1.5)
        A = np.array([[1.0, 0.5], [0.0, 1.0]])
        result = resample_linear_map(u, A)
        x = plane.points() @ A.T
        expected = np.exp(-np.sum(x ** 2, axis=-1) / (2 * 1.5 ** 2))
        assert np.max(np.abs(result.values - expected)) < 1e-4
        assert result.notes == ()

    @settings(max_examples=20, deadline=None)
    @given(
        st.floats(min_value=0.0, max_value=np.pi),
        st.floats(min_value=0.8, max_value=1.5),
        st.floats(min_value=0.8, max_value=1.5),
    )
    def test_norm_scales_with_determinant(self, angle, a, b):
        """Test ||u o A||^2 = ||u||^2 / |det A| for well-supported fields."""
        plane = Grid(L=(20.0, 20.0), N=(128, 128))
        u = gaussian_field(plane, width=1.5)
        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        A = rotation @ np.diag([a, b])
        result = resample_linear_map(u, A)
        assert l2_norm(result) ** 2 == pytest.approx(l2_norm(u) ** 2 / abs(np.linalg.det(A)), rel=1e-4)

    def test_identity_is_exact(self, plane):
        """Test that the identity map returns the samples unchanged."""
        u = white_noise_field(plane, np.random.default_rng(3))
        np.testing.assert_array_equal(resample_linear_map(u, np.eye(2)).values, u.values)

    def test_singular_map_raises(self, plane):
        """Test that a singular map is rejected."""
        with pytest.raises(FieldError) as exc_info:
            resample_linear_map(gaussian_field(plane), np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert "singular" in str(exc_info.value)

    def test_bad_order_raises(self, plane):
        """Test that only spline orders 1, 3 and 5 are accepted."""
        with pytest.raises(FieldError):
            resample_linear_map(gaussian_field(plane), np.eye(2), order=2)

    def test_boundary_mass_is_noted(self, line):
        """Test that mass near the edge is reported in the notes."""
        u = Field(line, np.ones(line.shape))
        result = resample_linear_map(u, np.array([[0.5]]))
        assert any("boundary mass" in note for note in result.notes)


class TestRefineAndGenerators:
    """Tests for refinement and initial-data generators."""

    def test_refine_preserves_norm(self, line):
        """Test that band-limited refinement keeps the L2 norm."""
        u = gaussian_field(line)
        fine = refine_field(u)
        assert fine.grid.N == (512,)
        assert l2_norm(fine) == pytest.approx(l2_norm(u), rel=1e-10)
        assert fine.is_real

    def test_band_limited_support(self, line):
        """Test that the spectrum vanishes outside the cube."""
        u = band_limited_field(line, np.random.default_rng(4), 2.0)
        u_hat = dft(u)
        outside = np.abs(line.frequencies()[..., 0]) > 2.0
        assert np.max(np.abs(u_hat.values[outside])) < 1e-10
        assert np.max(np.abs(u_hat.values[~outside])) > 0

    def test_wavepackets_are_real_and_reproducible(self, plane):
        """Test that a seeded generator reproduces the same field."""
        a = wavepacket_field(plane, np.random.default_rng(5))
        b = wavepacket_field(plane, np.random.default_rng(5))
        assert a.is_real
        np.testing.assert_array_equal(a.values, b.values)

    def test_tapered_noise_decays(self, line):
        """Test that the Gaussian taper suppresses the edges."""
        u = white_noise_field(line, np.random.default_rng(6), taper=1.0)
        assert np.max(np.abs(u.values[:10])) < 1e-20
