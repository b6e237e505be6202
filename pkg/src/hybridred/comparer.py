"""
Golden report checking.

Emitted JSON reports are compared value by value against a golden document.
Numbers may differ within a per-path tolerance; every other value must match
exactly. Paths use dots for keys and [i] for list items, and profile paths
may use * as a wildcard (e.g. "eigenvalues[*][0]" or "contraction.*").
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from .errors import ConfigError
from .models import CheckedValue, CheckStatus, GoldenCheckResult, GoldenProfile, Tolerance


logger = logging.getLogger("hybridred.comparer")

# volatile fields that differ between runs of the same configuration
DEFAULT_IGNORED = ("schema_version",)


class GoldenChecker:
    """Checks reports against golden documents with per-path tolerances."""

    def __init__(self, profile: Optional[GoldenProfile] = None):
        self.profile = profile or GoldenProfile()
        self.tolerances: Dict[str, Tolerance] = dict(self.profile.fields)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "GoldenChecker":
        data = _load(path)
        try:
            return cls(GoldenProfile(**(data or {})))
        except Exception as e:
            raise ConfigError(f"Invalid golden profile: {e}") from e

    def check(self, expected: Any, actual: Any) -> GoldenCheckResult:
        values: List[CheckedValue] = []
        self._check_value("", expected, actual, values)
        result = GoldenCheckResult(values=values)
        result.auto_log(self.profile.logging)
        return result

    def check_files(self, golden: Union[str, Path], report: Union[str, Path]) -> GoldenCheckResult:
        return self.check(_load(golden), _load(report))

    def _record(self, values, path, passed, status, expected, actual, tolerance=None) -> bool:
        values.append(CheckedValue(path=path or "root", passed=passed, status=status,
                                   expected=expected, actual=actual, tolerance_applied=tolerance))
        return passed

    def _check_value(self, path: str, expected: Any, actual: Any, values: List[CheckedValue]) -> bool:
        config = self._tolerance_for(path)
        if (config is not None and config.ignore) or path in DEFAULT_IGNORED:
            return self._record(values, path, True, CheckStatus.IGNORED, expected, actual)
        if expected is None and actual is None:
            return self._record(values, path, True, CheckStatus.IDENTICAL, expected, actual)
        if expected is None or actual is None:
            return self._record(values, path, False, CheckStatus.MISSING, expected, actual)

        if _is_number(expected) and _is_number(actual):
            return self._check_number(path, expected, actual, config, values)
        if type(expected) is not type(actual):
            return self._record(values, path, False, CheckStatus.TYPE_MISMATCH, expected, actual)
        if isinstance(expected, dict):
            passed = True
            for key in sorted(set(expected) | set(actual)):
                key_path = f"{path}.{key}" if path else key
                passed &= self._check_value(key_path, expected.get(key), actual.get(key), values)
            return passed
        if isinstance(expected, list):
            passed = True
            if len(expected) != len(actual):
                passed = self._record(values, f"{path}.length", False, CheckStatus.LENGTH_MISMATCH,
                                      len(expected), len(actual))
            for i, (e, a) in enumerate(zip(expected, actual)):
                passed &= self._check_value(f"{path}[{i}]", e, a, values)
            return passed
        if expected == actual:
            return self._record(values, path, True, CheckStatus.IDENTICAL, expected, actual)
        return self._record(values, path, False, CheckStatus.VALUE_MISMATCH, expected, actual)

    def _check_number(self, path, expected, actual, config: Optional[Tolerance], values) -> bool:
        if expected == actual:
            return self._record(values, path, True, CheckStatus.IDENTICAL, expected, actual)
        if config is None:
            return self._record(values, path, False, CheckStatus.VALUE_MISMATCH, expected, actual)

        # the greater of the two bounds applies
        bounds = []
        if config.percentage is not None:
            bounds.append((abs(expected * config.percentage / 100.0), f"{config.percentage}%"))
        if config.absolute is not None:
            bounds.append((config.absolute, f"{config.absolute} absolute"))
        tolerance, label = max(bounds, key=lambda b: b[0])
        if abs(expected - actual) <= tolerance:
            return self._record(values, path, True, CheckStatus.IN_TOLERANCE, expected, actual, label)
        logger.debug("%s: |%r - %r| above %s", path, expected, actual, label)
        return self._record(values, path, False, CheckStatus.OUTSIDE_TOLERANCE, expected, actual, label)

    def _tolerance_for(self, path: str) -> Optional[Tolerance]:
        if path in self.tolerances:
            return self.tolerances[path]
        for pattern, config in self.tolerances.items():
            if _matches(path, pattern):
                return config
        return None


def _matches(path: str, pattern: str) -> bool:
    regex = re.escape(pattern).replace(r"\*", ".*")
    return re.fullmatch(regex, path) is not None


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _load(path: Union[str, Path]) -> Any:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r") as f:
        text = f.read()
    if path.suffix == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def check_report(golden: Union[str, Path], report: Union[str, Path],
                 profile: Union[None, str, Path, GoldenProfile] = None) -> GoldenCheckResult:
    """Check a report file against a golden file, optionally with a tolerance profile file."""
    if profile is None or isinstance(profile, GoldenProfile):
        checker = GoldenChecker(profile)
    else:
        checker = GoldenChecker.from_file(profile)
    return checker.check_files(golden, report)
