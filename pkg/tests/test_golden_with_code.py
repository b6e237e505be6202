"""
Tests for golden report checking using profiles built in code.
"""

import copy

import pytest
from hybridred import GoldenChecker
from hybridred.models import CheckStatus, GoldenProfile, Tolerance
from .helpers.compare import BaseGoldenTests


GOLDEN = {
    "schema_version": "1.0",
    "section": "upper",
    "period": 6.283185307179586,
    "fixed_point": [0.0, 1.0],
    "spectral_radius": 0.64,
    "eigenvalues": [[0.64, 0.0]],
    "verdict": "ExactCertified",
}

PROFILE = GoldenProfile(
    fields={
        "period": Tolerance(absolute=1e-9),
        "fixed_point[*]": Tolerance(absolute=1e-8),
        "spectral_radius": Tolerance(percentage=0.01),
        "eigenvalues[*][*]": Tolerance(absolute=1e-6),
    }
)


class TestGoldenWithCode(BaseGoldenTests):
    """Test golden checking with programmatic profiles."""

    def get_test_data(self, test_name):
        """Build the same cases as the sample files."""
        report = copy.deepcopy(GOLDEN)
        if test_name == "golden_pass":
            report.update(schema_version="1.1", period=6.2831853072, fixed_point=[0.0, 1.0000000004],
                          spectral_radius=0.6400001, eigenvalues=[[0.6400002, 0.0]])
        else:
            del report["spectral_radius"]
            report.update(period=6.284, eigenvalues=[[0.64, 0.0], [0.1, 0.0]], verdict="ApproximateOnly")
        return PROFILE, GOLDEN, report


class TestToleranceRules:
    """Tolerance selection and validation."""

    def test_greater_bound_applies(self):
        """With both bounds the looser one decides."""
        profile = GoldenProfile(fields={"x": Tolerance(percentage=1.0, absolute=0.5)})
        result = GoldenChecker(profile).check({"x": 10.0}, {"x": 10.4})
        assert result.passed
        assert result.values[0].tolerance_applied == "0.5 absolute"

        result = GoldenChecker(profile).check({"x": 100.0}, {"x": 100.9})
        assert result.passed
        assert result.values[0].tolerance_applied == "1.0%"

    def test_wildcard_ignore(self):
        """Ignored wildcard paths pass whatever they contain."""
        profile = GoldenProfile(fields={"contraction.*": Tolerance(ignore=True)})
        result = GoldenChecker(profile).check(
            {"contraction": {"tangential": [1.0, 0.5]}, "r": 1},
            {"contraction": {"tangential": [9.0]}, "r": 1},
        )
        assert result.passed
        assert {v.status for v in result.values} == {CheckStatus.IGNORED.value, CheckStatus.IDENTICAL.value}

    def test_type_mismatch(self):
        """A string where a number is expected is a type mismatch."""
        result = GoldenChecker().check({"r": 1}, {"r": "1"})
        assert not result.passed
        assert result.values[0].status == CheckStatus.TYPE_MISMATCH.value

    def test_booleans_are_not_numbers(self):
        """true and 1 do not match even with a tolerance."""
        profile = GoldenProfile(fields={"holds": Tolerance(absolute=1.0)})
        result = GoldenChecker(profile).check({"holds": True}, {"holds": 1})
        assert not result.passed

    def test_tolerance_needs_a_bound(self):
        """A tolerance entry without bounds or ignore is invalid."""
        with pytest.raises(ValueError, match="At least one tolerance"):
            Tolerance()
