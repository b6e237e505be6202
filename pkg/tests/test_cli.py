"""
Tests for the command-line interface.
"""

import json

import numpy as np
import pandas as pd
import pytest

from hybridred.cli import main
from .helpers.config import Helper


class TestCommands:
    """Commands run against sample configurations."""

    def setup_method(self):
        """Set up test helpers."""
        self.helper = Helper()

    def test_models_list(self, capsys):
        """The model listing is JSON with a schema version."""
        assert main(["models", "list"]) == 0
        listing = json.loads(capsys.readouterr().out)
        assert listing["schema_version"] == "1.0"
        assert "hopper" in [m["name"] for m in listing["models"]]

    def test_simulate(self, tmp_path):
        """Two cycles of the half-turn oracle produce four events."""
        code = main(["simulate", "--config", self.helper.path("halfturn"), "--out", str(tmp_path)])
        assert code == 0
        events = json.loads((tmp_path / "events.json").read_text())
        assert len(events["events"]) == 4
        assert events["total_time"] == pytest.approx(4.0 * np.pi, abs=1e-9)
        frame = pd.read_csv(tmp_path / "trace.csv", comment="#")
        assert int(frame["event_flag"].sum()) == 4

    def test_simulate_hopper(self, tmp_path):
        """Five hopping cycles alternate liftoff and touchdown ten times."""
        code = main(["simulate", "--config", self.helper.path("hopper"), "--out", str(tmp_path)])
        assert code == 0
        events = json.loads((tmp_path / "events.json").read_text())
        assert [e["guard"] for e in events["events"]] == ["liftoff", "touchdown"] * 5
        frame = pd.read_csv(tmp_path / "trace.csv", comment="#")
        assert int(frame["event_flag"].sum()) == 10

    def test_analyze_reduce_hopper(self, tmp_path):
        """The hopper collapses onto a one degree of freedom subsystem."""
        code = main(["analyze", "reduce", "--config", self.helper.path("hopper"), "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "reduce.json").read_text())
        assert report["verdict"] == "ExactCertified"
        assert report["r"] == 1
        assert report["subsystem_dimension"] == 2

    def test_analyze_poincare(self, tmp_path):
        """The orbit and its spectrum are written."""
        code = main(["analyze", "poincare", "--config", self.helper.path("halfturn"), "--out", str(tmp_path),
                     "--plot"])
        assert code == 0
        orbit = json.loads((tmp_path / "orbit.json").read_text())
        assert orbit["period"] == pytest.approx(2.0 * np.pi, abs=1e-8)
        summary = json.loads((tmp_path / "poincare.json").read_text())
        assert summary["spectral_radius"] == pytest.approx(0.64, abs=1e-6)
        assert (tmp_path / "spectrum.svg").exists()

    def test_analyze_reduce(self, tmp_path):
        """The half-turn oracle reduces exactly."""
        code = main(["analyze", "reduce", "--config", self.helper.path("halfturn"), "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "reduce.json").read_text())
        assert report["verdict"] == "ExactCertified"
        assert report["certificate"]["n_samples"] == 4

    def test_analyze_phase(self, tmp_path):
        """Phase samples are evenly spaced over the period."""
        code = main(["analyze", "phase", "--config", self.helper.path("halfturn"), "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "phase.json").read_text())
        assert len(report["samples"]) == 4

    def test_control_deadbeat(self, tmp_path):
        """One-cycle deadbeat residuals are written as JSON and CSV."""
        code = main(["control", "deadbeat", "--config", self.helper.path("halfturn"), "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "deadbeat.json").read_text())
        assert report["max_residual"] <= 1e-8
        frame = pd.read_csv(tmp_path / "deadbeat_residuals.csv", comment="#")
        assert len(frame) == 4
        assert {"sample", "residual", "x_1", "theta_1"} <= set(frame.columns)

    def test_control_linear_law(self, tmp_path):
        """The linear law on the companion oracle has a two-cycle horizon."""
        code = main(["control", "deadbeat", "--config", self.helper.path("linear_companion"),
                     "--out", str(tmp_path), "--seed", "5"])
        assert code == 0
        report = json.loads((tmp_path / "deadbeat.json").read_text())
        assert report["law"] == "linear" and report["k"] == 2

    def test_check(self, capsys):
        """Check exits 0 on a match and 1 on a mismatch."""
        case = "golden_pass"
        assert main(["check", self.helper.path(case, "golden.json"), self.helper.path(case, "report.json"),
                     "--profile", self.helper.path(case, "profile.yaml")]) == 0
        case = "golden_fail"
        assert main(["check", self.helper.path(case, "golden.json"), self.helper.path(case, "report.json"),
                     "--profile", self.helper.path(case, "profile.yaml")]) == 1
        assert "period" in capsys.readouterr().out


class TestErrors:
    """Failures map onto exit codes with a JSON payload on stderr."""

    def setup_method(self):
        """Set up test helpers."""
        self.helper = Helper()

    def test_missing_config_flag(self, capsys):
        """Commands that need a configuration fail with code 2."""
        assert main(["simulate"]) == 2
        payload = json.loads(capsys.readouterr().err)
        assert payload["code"] == "config_error"
        assert "needs --config" in payload["message"]

    def test_invalid_config(self, tmp_path, capsys):
        """Invalid configuration files fail with code 2."""
        assert main(["simulate", "--config", self.helper.path("invalid_config"), "--out", str(tmp_path)]) == 2
        assert "Invalid configuration" in json.loads(capsys.readouterr().err)["message"]

    def test_unknown_model(self, tmp_path, capsys):
        """Unknown model names fail with code 2."""
        config = tmp_path / "run.yaml"
        config.write_text("model: nope\nhorizon:\n  time: 1.0\n")
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path)]) == 2
        payload = json.loads(capsys.readouterr().err)
        assert payload["error"] == "ConfigError"
        assert "Unknown model" in payload["message"]

    def test_embed_needs_polyped(self, tmp_path):
        """The embedding command is specific to the polyped."""
        assert main(["control", "embed", "--config", self.helper.path("halfturn"), "--out", str(tmp_path)]) == 2
