"""
Tests for golden report checking using profiles and reports from sample files.

These tests load profiles and reports from YAML/JSON files and test the same
scenarios as the programmatic tests, ensuring identical behavior.
"""

import pytest
from hybridred import GoldenChecker, check_report
from hybridred.errors import ConfigError
from .helpers.config import Helper
from .helpers.compare import BaseGoldenTests


class TestGoldenWithConf(BaseGoldenTests):
    """Test golden checking using YAML profiles."""

    def setup_method(self):
        """Set up test helpers."""
        self.helper = Helper()

    def get_test_data(self, test_name):
        """Load profile and data from sample files."""
        golden, report, profile_path = self.helper.load_golden_files(test_name)
        return GoldenChecker.from_file(profile_path).profile, golden, report


class TestCheckReportFiles:
    """Test the file-level entry point."""

    def setup_method(self):
        """Set up test helpers."""
        self.helper = Helper()

    def test_check_report_with_profile_file(self):
        """check_report reads golden, report and profile from disk."""
        result = check_report(
            self.helper.path("golden_pass", "golden.json"),
            self.helper.path("golden_pass", "report.json"),
            self.helper.path("golden_pass", "profile.yaml"),
        )
        assert result.passed

    def test_check_report_without_profile_is_exact(self):
        """Without a profile every numeric difference fails."""
        result = check_report(
            self.helper.path("golden_pass", "golden.json"),
            self.helper.path("golden_pass", "report.json"),
        )
        assert not result.passed
        assert "period" in {v.path for v in result.failures}

    def test_missing_file(self):
        """A missing report file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError, match="File not found"):
            check_report(self.helper.path("golden_pass", "golden.json"), "tests/samples/nope.json")

    def test_invalid_profile(self, tmp_path):
        """A profile with both ignore and tolerance is rejected."""
        profile = tmp_path / "profile.yaml"
        profile.write_text("fields:\n  period:\n    ignore: true\n    absolute: 1.0\n")
        with pytest.raises(ConfigError, match="Invalid golden profile"):
            GoldenChecker.from_file(profile)
