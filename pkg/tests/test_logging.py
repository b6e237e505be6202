"""
Tests for report logging.
"""
import io
import logging

from hybridred import LoggingConfig, LoggingDetail, LoggingFormat, enable_logging
from hybridred.factory import log_report
from hybridred.models import ContractionProfile, OrbitReport, ValidationFinding, ValidationReport


class TestLogging:
    """Reports log themselves according to a LoggingConfig."""

    def setup_method(self):
        """A passing and a failing report, and a captured report logger."""
        self.passing = OrbitReport(section="upper", domain_id="upper", fixed_point=[0.0, 1.0],
                                   period=6.283185307, residual=1e-13)
        self.failing = ValidationReport(samples_checked=1, findings=[
            ValidationFinding(kind="not_outward", domain_id="d", face_index=0, detail="guard rate 1 >= 0"),
        ])
        self.log_capture = io.StringIO()
        self.handler = logging.StreamHandler(self.log_capture)
        self.logger = logging.getLogger("hybridred.report")
        self.original_level = self.logger.level
        self.logger.addHandler(self.handler)
        self.logger.setLevel(logging.INFO)

    def teardown_method(self):
        """Detach the capture handler."""
        self.logger.removeHandler(self.handler)
        self.logger.setLevel(self.original_level)

    def test_never(self):
        """when=never logs nothing, even for failures."""
        self.failing.auto_log(LoggingConfig(enabled=True, when="never"))
        assert self.log_capture.getvalue() == ""

    def test_on_fail_skips_passing_reports(self):
        """The default only logs reports that did not pass."""
        self.passing.auto_log()
        assert self.log_capture.getvalue() == ""
        self.failing.auto_log()
        output = self.log_capture.getvalue()
        assert "ValidationReport [ID:" in output
        assert "not_outward" in output

    def test_always_table(self):
        """Table format uses the report's table."""
        self.passing.auto_log(LoggingConfig(when="always"))
        output = self.log_capture.getvalue()
        assert "OrbitReport [ID:" in output
        assert "section upper (upper)" in output

    def test_json_format(self):
        """JSON format logs the serialized report."""
        self.passing.auto_log(LoggingConfig(when="always", format=LoggingFormat.JSON))
        output = self.log_capture.getvalue()
        assert "OrbitReport (JSON)" in output
        assert '"fixed_point"' in output

    def test_full_detail(self):
        """Full detail appends the JSON document to the table."""
        self.passing.auto_log(LoggingConfig(when="always", detail=LoggingDetail.FULL))
        output = self.log_capture.getvalue()
        assert "section upper (upper)" in output
        assert '"schema_version": "1.0"' in output

    def test_auto_detect_respects_logger_level(self):
        """With enabled unset nothing is logged when the logger is above the report level."""
        self.logger.setLevel(logging.WARNING)
        self.failing.auto_log(LoggingConfig(when="always"))
        assert self.log_capture.getvalue() == ""

    def test_explicit_enable_overrides_level_check(self):
        """enabled=True skips the auto-detection but still honours the handler chain."""
        self.failing.auto_log(LoggingConfig(enabled=True, when="always", level=logging.WARNING))
        assert "ValidationReport" in self.log_capture.getvalue()

    def test_custom_logger_name(self):
        """Reports can be routed to another logger."""
        capture = io.StringIO()
        handler = logging.StreamHandler(capture)
        other = logging.getLogger("hybridred.custom")
        other.addHandler(handler)
        other.setLevel(logging.INFO)
        try:
            self.passing.auto_log(LoggingConfig(when="always", logger_name="hybridred.custom"))
        finally:
            other.removeHandler(handler)
        assert "OrbitReport" in capture.getvalue()
        assert self.log_capture.getvalue() == ""


class TestEnableLogging:
    """Module-level logging configuration."""

    def setup_method(self):
        """Capture the report logger."""
        self.log_capture = io.StringIO()
        self.handler = logging.StreamHandler(self.log_capture)
        self.logger = logging.getLogger("hybridred.report")
        self.logger.addHandler(self.handler)
        self.logger.setLevel(logging.INFO)

    def teardown_method(self):
        """Detach the handler and restore the default configuration."""
        self.logger.removeHandler(self.handler)
        self.logger.setLevel(logging.NOTSET)
        enable_logging()

    def test_enable_logging_always_json(self):
        """log_report uses the configuration set by enable_logging."""
        config = enable_logging(when="always", format="json")
        assert config.format == LoggingFormat.JSON
        log_report(ContractionProfile(cycles=3, tangential=[1.0, 0.5], transverse=[0.1, 0.0],
                                      tangential_ratios=[0.5], transverse_ratios=[0.0]))
        assert "ContractionProfile (JSON)" in self.log_capture.getvalue()

    def test_enable_logging_on_fail(self):
        """Passing reports are not logged on_fail."""
        enable_logging(when="on_fail")
        log_report(OrbitReport(section="s", domain_id="d", fixed_point=[0.0], period=1.0, residual=0.0))
        assert self.log_capture.getvalue() == ""
