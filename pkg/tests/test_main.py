"""
Unit tests for main.py
"""

import json
import logging
import os
import tempfile
from pathlib import Path

import pytest
import yaml

from src.main import build_parser, main


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop handlers installed by setup_logging."""
    yield
    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        handler.close()
        root_logger.removeHandler(handler)


@pytest.fixture
def out_dir():
    """Temporary output directory."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


def exit_code(argv) -> int:
    with pytest.raises(SystemExit) as exc_info:
        main(argv)
    return exc_info.value.code


class TestParser:
    """Tests for the argument parser."""

    def test_repeated_overrides(self):
        """Test that --set accumulates."""
        args = build_parser().parse_args(["analyze", "--set", "model.s=0.6", "--set", "seed=2"])
        assert args.overrides == ["model.s=0.6", "seed=2"]
        assert args.config is None

    def test_unknown_command_rejected(self):
        """Test that argparse refuses commands outside the list."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["teleport"])


class TestMain:
    """Tests for the CLI exit status contract."""

    def test_dry_run(self, out_dir):
        """Test that a dry run exits 0 without writing artifacts."""
        assert exit_code(["hum", "--dry-run", "-o", out_dir, "--set", "model.preset=kolmogorov"]) == 0
        assert os.listdir(out_dir) == []

    def test_missing_config(self, capsys):
        """Test that a missing config file exits 1."""
        assert exit_code(["analyze", "-c", "/nonexistent/config.yaml"]) == 1
        assert "not found" in capsys.readouterr().out

    def test_invalid_override(self, capsys):
        """Test that a schema error exits 1 before any computation."""
        assert exit_code(["analyze", "--set", "model.colour=red"]) == 1
        assert "CONFIG_SCHEMA" in capsys.readouterr().out

    def test_invalid_config_writes_manifest(self, out_dir, capsys):
        """Test that a rejected configuration still leaves a manifest with its error code."""
        assert exit_code(["evolve", "-o", out_dir, "--set", "evolve.mode=bogus"]) == 1
        assert "CONFIG_SCHEMA" in capsys.readouterr().out
        manifest = json.loads((Path(out_dir) / "manifest.json").read_text())
        assert manifest["command"] == "evolve"
        assert manifest["exit_code"] == 1
        assert manifest["errors"][0]["code"] == "CONFIG_SCHEMA"
        assert "evolve.mode" in manifest["errors"][0]["message"]

    def test_missing_omega_keys_writes_manifest(self, out_dir):
        """Test that stripes without width and period fail with a manifest."""
        assert exit_code(["thickness", "-o", out_dir, "--set", "model.preset=heat",
                          "--set", "omega.kind=stripes"]) == 1
        manifest = json.loads((Path(out_dir) / "manifest.json").read_text())
        assert manifest["errors"][0]["code"] == "CONFIG_SCHEMA"

    def test_analyze_ok(self, out_dir):
        """Test exit 0 for a Kalman model."""
        assert exit_code(["analyze", "-o", out_dir, "--set", "model.preset=kolmogorov"]) == 0
        manifest = json.loads((Path(out_dir) / "manifest.json").read_text())
        assert manifest["command"] == "analyze"

    def test_analyze_verdict_failed(self, out_dir):
        """Test exit 2 when the rank condition fails."""
        code = exit_code([
            "analyze", "-o", out_dir,
            "--set", "model.B=[[0, 0], [0, 0]]",
            "--set", "model.Q=[[0, 0], [0, 1]]",
        ])
        assert code == 2

    def test_config_file(self, out_dir):
        """Test a run driven by a YAML file with an output override."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False) as f:
            yaml.dump({"model": {"preset": "kolmogorov", "s": 0.75}, "seed": 4}, f)
            path = f.name
        try:
            assert exit_code(["analyze", "-c", path, "-o", out_dir, "--seed", "9"]) == 0
        finally:
            os.unlink(path)
        manifest = json.loads((Path(out_dir) / "manifest.json").read_text())
        assert manifest["seed"] == 9
