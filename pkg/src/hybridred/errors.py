"""
Exception hierarchy for hybridred.

Every error carries an ErrorCode so the command line can map it onto a
stable exit status and a machine-readable JSON payload.
"""

from enum import Enum
from typing import Any, Dict, Optional


SCHEMA_VERSION = "1.0"


class ErrorCode(str, Enum):
    """Stable error codes emitted in CLI error payloads."""
    CONFIG_ERROR = "config_error"
    NUMERICAL_FAILURE = "numerical_failure"
    ASSUMPTION_VIOLATION = "assumption_violation"


EXIT_CODES = {
    ErrorCode.CONFIG_ERROR: 2,
    ErrorCode.NUMERICAL_FAILURE: 3,
    ErrorCode.ASSUMPTION_VIOLATION: 4,
}


class HybridError(Exception):
    """Base class for all hybridred errors."""

    code: ErrorCode = ErrorCode.NUMERICAL_FAILURE

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None, code: Optional[ErrorCode] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}
        if code is not None:
            self.code = code

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.code]

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used on stderr by the CLI."""
        return {
            "schema_version": SCHEMA_VERSION,
            "error": type(self).__name__,
            "code": self.code.value,
            "message": self.message,
            "details": self.details,
        }


class ConfigError(HybridError):
    code = ErrorCode.CONFIG_ERROR


# Numerical failures

class NoEventBeforeTmax(HybridError):
    pass


class StepFailure(HybridError):
    pass


class EvaluationFailure(HybridError):
    """Raised when a map fails at a finite-difference stencil point."""

    def __init__(self, message: str, point=None, code: Optional[ErrorCode] = None):
        details = {}
        if point is not None:
            details["point"] = [float(v) for v in point]
        super().__init__(message, details, code)
        self.point = point


class ConvergenceFailure(HybridError):
    pass


class NoConvergence(HybridError):
    pass


class SingularJacobian(HybridError):
    pass


class NoReturn(HybridError):
    pass


class WrongSequence(HybridError):
    pass


class DeviationUnderflow(HybridError):
    pass


class NotConverged(HybridError):
    pass


class RankDeficient(HybridError):
    """Control rank condition failed; carries the achieved and required rank."""

    def __init__(self, message: str, achieved: int, required: int):
        super().__init__(message, {"achieved_rank": achieved, "required_rank": required})
        self.achieved = achieved
        self.required = required


class NotStabilizable(HybridError):
    pass


class WrenchInfeasible(HybridError):
    def __init__(self, message: str, condition_number: float):
        super().__init__(message, {"condition_number": float(condition_number)})
        self.condition_number = condition_number


class StepTimeUndefined(HybridError):
    pass


# Model assumption violations

class TangentialCrossing(HybridError):
    code = ErrorCode.ASSUMPTION_VIOLATION


class ZenoSuspicion(HybridError):
    code = ErrorCode.ASSUMPTION_VIOLATION


class EscapeDomain(HybridError):
    code = ErrorCode.ASSUMPTION_VIOLATION
