"""
Unit tests for runner.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from src.config import ConfigLoader
from src.errors import ConfigError, MatrixError, ParameterError
from src.models import ExitCode
from src.runner import Runner, build_grid, build_model, build_omega
from src.writers import read_fouf


@pytest.fixture
def out_dir():
    """Temporary output directory."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


def run(out_dir: Path, command: str, *overrides: str):
    runner = Runner(ConfigLoader(None, list(overrides)), out_dir=str(out_dir))
    return runner.run(command)


def manifest(out_dir: Path) -> dict:
    return json.loads((out_dir / "manifest.json").read_text())


HEAT_LINE = ("model.preset=heat", "model.n=1", "grid.L=16.0", "grid.N=64")


class TestBuildModel:
    """Tests for build_model."""

    def test_kolmogorov_preset(self):
        """Test the Kolmogorov block structure and the 2^{1/s} diffusion."""
        model = build_model({"preset": "kolmogorov", "n": 1, "s": 0.5})
        np.testing.assert_array_equal(model.B, [[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(model.Q.base, [[0.0, 0.0], [0.0, 4.0]])

    def test_heat_preset(self):
        """Test B = 0 and Q = 2^{1/s} I."""
        model = build_model({"preset": "heat", "n": 3, "s": 1.0})
        assert model.n == 3
        assert not np.any(model.B)
        np.testing.assert_allclose(model.Q.base, 2.0 * np.eye(3))

    def test_explicit_matrices(self):
        """Test a model given by B and Q."""
        model = build_model({"B": [[0, 1], [-1, 0]], "Q": [[1, 0], [0, 1]], "s": 0.6})
        assert model.s == 0.6
        assert model.trace == 0.0

    def test_missing_matrices(self):
        """Test that neither preset nor matrices is a schema error."""
        with pytest.raises(ConfigError):
            build_model({"preset": None, "s": 0.75})

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            build_model({"preset": "langevin", "s": 0.75})

    def test_shape_mismatch(self):
        with pytest.raises(MatrixError):
            build_model({"B": [[0.0]], "Q": [[1, 0], [0, 1]], "s": 0.75})

    def test_nonpositive_s(self):
        with pytest.raises(ParameterError):
            build_model({"preset": "heat", "s": 0.0})


class TestBuildGridAndOmega:
    """Tests for build_grid and build_omega."""

    def test_scalar_broadcast(self):
        """Test that scalar L and N apply to every axis."""
        grid = build_grid({"L": 10.0, "N": 32}, 2)
        assert grid.L == (10.0, 10.0)
        assert grid.N == (32, 32)

    def test_per_axis_values(self):
        grid = build_grid({"L": [10.0, 20.0], "N": [32, 64]}, 2)
        assert grid.N == (32, 64)

    def test_full_omega(self):
        """Test the default observation set."""
        grid = build_grid({"L": 8.0, "N": 32}, 1)
        config = ConfigLoader(None)
        omega, centers = build_omega(grid, config.get_section("omega"))
        assert omega.indicator.all()
        assert centers is None

    def test_unknown_omega_kind(self):
        grid = build_grid({"L": 8.0, "N": 32}, 1)
        with pytest.raises(ConfigError):
            build_omega(grid, {"kind": "annulus", "gamma": 0.3, "a": 1.0})


class TestRunner:
    """Tests for Runner commands."""

    def test_analyze_kolmogorov(self, out_dir):
        """Test r = 1 and exponents for the Kolmogorov preset."""
        stats = run(out_dir, "analyze", "model.preset=kolmogorov")
        assert stats.exit_code == ExitCode.OK
        analysis = json.loads((out_dir / "analysis.json").read_text())
        assert analysis["kalman"]["r"] == 1
        assert analysis["exponents"]["dissipation_exponent"] == pytest.approx(2.5)
        data = manifest(out_dir)
        assert data["exit_code"] == 0
        assert data["artifacts"] == ["analysis.json"]
        assert (out_dir / "timings.json").exists()

    def test_analyze_without_model(self, out_dir):
        """Test that a missing model is reported with exit code 1."""
        stats = run(out_dir, "analyze")
        assert stats.exit_code == ExitCode.ERROR
        assert stats.errors[0]["code"] == "CONFIG_SCHEMA"
        assert manifest(out_dir)["exit_code"] == 1

    def test_analyze_non_kalman(self, out_dir):
        """Test that a failing rank condition is a failed verdict, not an error."""
        stats = run(out_dir, "analyze", "model.B=[[0, 0], [0, 0]]", "model.Q=[[0, 0], [0, 1]]")
        assert stats.errors == []
        assert stats.exit_code == ExitCode.VERDICT_FAILED
        assert not stats.verdicts[0].passed
        assert "exponents" not in stats.results["analysis"]

    def test_evolve_zero_time_is_identity(self, out_dir):
        """Test that the t = 0 snapshot equals the initial field."""
        stats = run(out_dir, "evolve", *HEAT_LINE, "evolve.times=[0.0, 0.5]")
        assert stats.exit_code == ExitCode.OK
        initial = read_fouf(out_dir / "initial.fouf")
        np.testing.assert_array_equal(read_fouf(out_dir / "evolve_000.fouf").values, initial.values)
        assert (out_dir / "evolve_001.fouf").exists()
        lines = (out_dir / "evolve_norms.csv").read_text().splitlines()
        assert lines[0] == "t,norm,bound"
        assert len(lines) == 3

    def test_thickness_stripes(self, out_dir):
        """Test that half-covering stripes are 0.3-thick."""
        stats = run(out_dir, "thickness", *HEAT_LINE,
                    "omega.kind=stripes", "omega.width=0.5", "omega.period=1.0")
        assert stats.exit_code == ExitCode.OK
        result = json.loads((out_dir / "thickness.json").read_text())
        assert result["thick"] is True
        assert result["min_fraction"] == pytest.approx(0.5)

    def test_thickness_too_demanding(self, out_dir):
        """Test that gamma above the covered fraction fails the verdict."""
        stats = run(out_dir, "thickness", *HEAT_LINE,
                    "omega.kind=stripes", "omega.width=0.5", "omega.period=1.0", "omega.gamma=0.6")
        assert stats.exit_code == ExitCode.VERDICT_FAILED

    def test_manifest_is_deterministic(self, out_dir):
        """Test that two identical runs write identical manifests."""
        first, second = out_dir / "first", out_dir / "second"
        run(first, "analyze", "model.preset=kolmogorov", "seed=3")
        run(second, "analyze", "model.preset=kolmogorov", "seed=3")
        assert (first / "manifest.json").read_text() == (second / "manifest.json").read_text()

    def test_seed_override(self, out_dir):
        """Test that the seed argument wins over the configuration."""
        runner = Runner(ConfigLoader(None, ["seed=3"]), out_dir=str(out_dir), seed=11)
        assert runner.seed == 11
        assert Runner(ConfigLoader(None, ["seed=3"]), out_dir=str(out_dir)).seed == 3

    def test_unknown_command(self, out_dir):
        """Test that an unknown command is an error recorded in the manifest."""
        stats = run(out_dir, "teleport")
        assert stats.exit_code == ExitCode.ERROR
        assert "Unknown command" in stats.errors[0]["message"]
