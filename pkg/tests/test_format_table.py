"""
Tests for report table formatting.
"""
import pytest
from hybridred import GoldenChecker
from hybridred.models import (
    CertificateReport, DeadbeatReport, EmbeddingReport, EmbeddingRow, EventLog, EventRecord,
    GoldenProfile, ReductionReport, SpectralSummary, Tolerance, ValidationReport,
)


class TestGoldenTable:
    """Golden check tables show failures first."""

    def setup_method(self):
        """A report where the period matches, the radius is within tolerance and the rank fails."""
        self.expected = {"period": 6.28, "spectral_radius": 0.64, "rank": 1}
        self.actual = {"period": 6.28, "spectral_radius": 0.6401, "rank": 2}
        self.checker = GoldenChecker(GoldenProfile(fields={"spectral_radius": Tolerance(absolute=1e-3)}))

    def test_failures_only(self):
        """Only failing paths appear when something failed."""
        output = self.checker.check(self.expected, self.actual).format_table()
        assert "rank" in output
        assert "period" not in output
        assert "spectral_radius" not in output

    def test_all_values_when_passing(self):
        """A passing check lists every value."""
        self.actual["rank"] = 1
        result = self.checker.check(self.expected, self.actual)
        assert result.passed
        output = result.format_table()
        assert "period" in output and "spectral_radius" in output
        assert "fail" not in output

    def test_long_paths_truncated(self):
        """Paths longer than the column keep their tail."""
        path = "a" * 40
        output = self.checker.check({path: 1}, {path: 2}).format_table()
        assert "..." + "a" * 27 in output


class TestReportTables:
    """Each report renders a readable table."""

    def test_event_log(self):
        """One row per event and a closing line."""
        log = EventLog(events=[
            EventRecord(t=3.14159, guard="g_upper", pre_domain="upper", pre=[0.0, -1.0],
                        post_domain="lower", post=[0.0, -0.8]),
        ], total_time=3.5)
        lines = log.format_table().splitlines()
        assert len(lines) == 4
        assert "g_upper" in lines[2]
        assert lines[-1] == "stopped at t=3.5 (horizon)"

    def test_spectral_summary(self):
        """Rank rows are followed by eigenvalues and the nilpotent index."""
        summary = SpectralSummary(section_dimension=1, m=2, rank_bound=1, eigenvalues=[(0.64, 0.0)],
                                  singular_values=[[0.64], [0.4096]], ranks=[1, 1], nilpotent_index=1,
                                  spectral_radius=0.64)
        output = summary.format_table()
        assert "eigenvalues: 0.64" in output
        assert "nilpotent index: 1" in output
        assert summary.stabilized_rank == 1

    def test_validation_without_findings(self):
        """A clean validation collapses to one line."""
        assert ValidationReport(samples_checked=12).format_table() == "12 samples checked, no findings"

    def test_reduction_report(self):
        """The verdict heads the table and the certificate is included."""
        certificate = CertificateReport(k=1, radius=0.01, n_samples=4, ranks=[1] * 4, next_ranks=[1] * 4,
                                        histogram={"1": 4}, rank=1, holds=True)
        report = ReductionReport(verdict="ExactCertified", r=1, m=2, subsystem_dimension=2,
                                 rank_profile=[1, 1, 1], spectral_radius=0.64, certificate=certificate)
        lines = report.format_table().splitlines()
        assert lines[0] == "verdict: ExactCertified"
        assert "rank 1: 4" in report.format_table()
        assert report.passed

    def test_deadbeat_recommendation(self):
        """Rank-deficient laws carry their recommendation."""
        report = DeadbeatReport(law="onecycle", k=1, achieved_rank=1, required_rank=2,
                                recommendation="try a multi-cycle law with k > 1")
        output = report.format_table()
        assert output.startswith("law: onecycle (k=1), rank 1/2")
        assert output.endswith("try a multi-cycle law with k > 1")
        assert not report.passed

    def test_embedding_report(self):
        """One row per leg count."""
        report = EmbeddingReport(rows=[EmbeddingRow(legs=4, steps=2, max_body_deviation=1e-9,
                                                    max_condition_number=3.2)], limb_spread=1e-12)
        lines = report.format_table().splitlines()
        assert lines[2].startswith("4    | 2")
        assert lines[-1] == "limb spread after two steps: 1e-12"

    @pytest.mark.parametrize("report", [
        ValidationReport(samples_checked=1),
        EventLog(),
    ])
    def test_json_has_schema_version(self, report):
        """Every report serializes with its schema version."""
        assert '"schema_version": "1.0"' in report.to_json()
