"""
Pydantic models for hybridred configuration and reports.

This module contains the configuration documents and every serializable
report, with no dependencies on the numerical code to avoid circular imports.
"""

from typing import Dict, Any, Optional, List, Literal, Tuple
from pydantic import BaseModel, Field, field_validator, model_validator, ConfigDict
from enum import Enum
import logging
import json
import random
import string

from .errors import SCHEMA_VERSION


def _generate_report_id() -> str:
    """Generate a short random ID for correlating report outputs."""
    return ''.join(random.choices(string.ascii_lowercase + string.digits, k=6))


def _fmt(value: Optional[float], width: int = 10) -> str:
    if value is None:
        return f"{'-':<{width}}"
    return f"{value:<{width}.4g}"


class IntegratorOptions(BaseModel):
    """Tolerances and budgets for the event-detecting integrator."""
    model_config = ConfigDict(extra="forbid")

    rel_tol: float = Field(1e-9, gt=0, description="Relative tolerance of the embedded RK pair")
    abs_tol: float = Field(1e-12, gt=0, description="Absolute tolerance of the embedded RK pair")
    max_step: float = Field(0.1, gt=0, description="Largest accepted step in time units")
    event_tol: float = Field(1e-12, gt=0, description="Event localization tolerance in time units")
    max_events_per_step: int = Field(8, ge=1, description="Events allowed inside one Zeno window before aborting")
    t_max: float = Field(1000.0, gt=0, description="Time budget for a single search for the next event")


class LoggingDetail(str, Enum):
    """How much of a report to log."""
    SUMMARY = "summary"
    FULL = "full"


class LoggingFormat(str, Enum):
    """Output format for report logging."""
    TABLE = "table"
    JSON = "json"


class LoggingConfig(BaseModel):
    """Configuration for report logging."""
    enabled: Optional[bool] = Field(None, description="Enable logging (None=auto-detect from logger, True/False=explicit)")
    when: Literal["never", "always", "on_fail"] = Field("on_fail", description="When to log reports")
    detail: LoggingDetail = Field(LoggingDetail.SUMMARY, description="Level of detail to log")
    format: LoggingFormat = Field(LoggingFormat.TABLE, description="Output format for logs")
    logger_name: str = Field("hybridred.report", description="Logger name to use")
    level: int = Field(logging.INFO, description="Logging level for report entries")


class Report(BaseModel):
    """Base class of every serializable analysis report."""
    model_config = ConfigDict(use_enum_values=True)

    schema_version: str = Field(SCHEMA_VERSION, description="Report format version")

    @property
    def passed(self) -> bool:
        return True

    def format_table(self) -> str:
        return self.to_json()

    def to_json(self) -> str:
        """Convert report to JSON string."""
        return json.dumps(self.model_dump(), indent=2, sort_keys=True)

    def auto_log(self, logging_config: Optional[LoggingConfig] = None) -> None:
        """Log the report according to the logging configuration."""
        logging_config = logging_config or LoggingConfig()
        if logging_config.enabled is False or logging_config.when == "never":
            return

        logger = logging.getLogger(logging_config.logger_name)
        if logging_config.enabled is None and not logger.isEnabledFor(logging_config.level):
            return
        if logging_config.when == "on_fail" and self.passed:
            return

        report_id = _generate_report_id()
        name = type(self).__name__
        if logging_config.format == LoggingFormat.TABLE:
            text = self.format_table()
            if logging_config.detail == LoggingDetail.FULL:
                text = f"{text}\n{self.to_json()}"
            logger.log(logging_config.level, f"{name} [ID: {report_id}]:\n{text}")
        else:
            logger.log(logging_config.level, f"{name} (JSON) [ID: {report_id}]:\n{self.to_json()}")


# Reports

class ValidationFinding(BaseModel):
    """One problem found while validating a system."""
    kind: Literal["not_outward", "reset_outside_target", "dimension_mismatch", "non_finite_field"]
    domain_id: str
    face_index: Optional[int] = None
    detail: str
    point: List[float] = Field(default_factory=list)


class ValidationReport(Report):
    """Findings of hybrid system validation against sampled states."""
    samples_checked: int = 0
    findings: List[ValidationFinding] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.findings

    def format_table(self) -> str:
        if not self.findings:
            return f"{self.samples_checked} samples checked, no findings"
        header = "Kind                   | Domain     | Face | Detail"
        rows = [header, "-" * len(header)]
        for f in self.findings:
            face = "-" if f.face_index is None else str(f.face_index)
            rows.append(f"{f.kind:<22} | {f.domain_id:<10} | {face:<4} | {f.detail}")
        return "\n".join(rows)


class EventRecord(BaseModel):
    t: float
    guard: Optional[str] = None
    pre_domain: str
    pre: List[float]
    post_domain: str
    post: List[float]


class EventLog(Report):
    """Discrete transitions of one execution."""
    events: List[EventRecord] = Field(default_factory=list)
    total_time: float = 0.0
    stop_reason: str = "horizon"

    def format_table(self) -> str:
        header = "t            | guard"
        rows = [header, "-" * len(header)]
        rows += [f"{e.t:<12.6g} | {e.guard or '-'}" for e in self.events]
        rows.append(f"stopped at t={self.total_time:.6g} ({self.stop_reason})")
        return "\n".join(rows)


class OrbitReport(Report):
    """Fixed point of a return map and the period of its orbit."""
    section: str
    domain_id: str
    fixed_point: List[float]
    period: float
    residual: float

    def format_table(self) -> str:
        point = ", ".join(f"{v:.9g}" for v in self.fixed_point)
        return f"section {self.section} ({self.domain_id}): [{point}], period {self.period:.9g}, residual {self.residual:.2e}"


class SpectralSummary(Report):
    """Eigenvalues and iterated rank profile of a linearized return map."""
    section_dimension: int
    m: int = Field(..., description="Minimum domain dimension of the system")
    rank_bound: int = Field(..., description="Upper bound on rank DP from the minimum domain dimension")
    eigenvalues: List[Tuple[float, float]] = Field(..., description="(real, imag) pairs sorted by descending magnitude")
    singular_values: List[List[float]] = Field(..., description="Singular values of DP^k for k = 1, 2, ...")
    ranks: List[int]
    nilpotent_index: int = Field(..., description="Smallest k with r_k = r_{k+1}")
    spectral_radius: float
    jacobian: List[List[float]] = Field(default_factory=list, description="DP at the fixed point")
    anomalies: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.anomalies

    @property
    def stabilized_rank(self) -> int:
        return self.ranks[self.nilpotent_index - 1]

    def rank_at(self, k: int) -> int:
        return self.ranks[min(k, len(self.ranks)) - 1]

    def format_table(self) -> str:
        header = "k    | rank | sigma_max  | sigma_min"
        rows = [header, "-" * len(header)]
        for k, (rank, sv) in enumerate(zip(self.ranks, self.singular_values), start=1):
            smax = sv[0] if sv else None
            smin = sv[-1] if sv else None
            rows.append(f"{k:<4} | {rank:<4} | {_fmt(smax)} | {_fmt(smin)}")
        eig = ", ".join(f"{re:.6g}{im:+.3g}j" if im else f"{re:.6g}" for re, im in self.eigenvalues)
        rows.append(f"eigenvalues: {eig}")
        rows.append(f"nilpotent index: {self.nilpotent_index}, spectral radius: {self.spectral_radius:.6g}")
        for anomaly in self.anomalies:
            rows.append(f"anomaly: {anomaly}")
        return "\n".join(rows)


class CertificateReport(Report):
    """Sampled constant-rank certificate of DP^k around a fixed point."""
    k: int
    radius: float
    n_samples: int
    ranks: List[int] = Field(..., description="Rank of DP^k at each sample")
    next_ranks: List[int] = Field(..., description="Rank of DP^(k+1) at each sample")
    histogram: Dict[str, int]
    rank: Optional[int] = None
    holds: bool
    degenerate: bool = False
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.holds and not self.degenerate

    def format_table(self) -> str:
        hist = ", ".join(f"rank {r}: {n}" for r, n in sorted(self.histogram.items()))
        status = "holds" if self.holds else "fails"
        flag = " (degenerate)" if self.degenerate else ""
        return f"k={self.k} radius={self.radius:g} samples={self.n_samples}: {status}{flag}\n{hist}\n{self.reason}".rstrip()


class EigenPair(BaseModel):
    a: Tuple[float, float]
    b: Tuple[float, float]
    discrepancy: float


class SpectrumComparison(Report):
    """Nonzero spectra of two sections of the same periodic orbit."""
    nonzero_a: List[Tuple[float, float]]
    nonzero_b: List[Tuple[float, float]]
    pairs: List[EigenPair]
    max_discrepancy: float
    zeros_a: int
    zeros_b: int
    unmatched: int = 0

    def format_table(self) -> str:
        header = "lambda_a             | lambda_b             | discrepancy"
        rows = [header, "-" * len(header)]
        for p in self.pairs:
            a = complex(*p.a)
            b = complex(*p.b)
            rows.append(f"{str(a):<20} | {str(b):<20} | {p.discrepancy:.3g}")
        rows.append(f"zero eigenvalues: {self.zeros_a} vs {self.zeros_b}; unmatched: {self.unmatched}")
        return "\n".join(rows)


class ContractionProfile(Report):
    """Per-cycle deviation norms split along the eigenbasis of DP."""
    cycles: int
    tangential: List[float]
    transverse: List[float]
    tangential_ratios: List[Optional[float]]
    transverse_ratios: List[Optional[float]]
    fitted_rate: Optional[float] = Field(None, description="exp of the log-slope of tangential deviations")
    truncated_at: Optional[int] = None

    def format_table(self) -> str:
        header = "cycle | tangential | transverse | tan ratio  | trans ratio"
        rows = [header, "-" * len(header)]
        for i, (t, n) in enumerate(zip(self.tangential, self.transverse)):
            tr = self.tangential_ratios[i - 1] if i else None
            nr = self.transverse_ratios[i - 1] if i else None
            rows.append(f"{i:<5} | {_fmt(t)} | {_fmt(n)} | {_fmt(tr)} | {_fmt(nr)}")
        if self.truncated_at is not None:
            rows.append(f"truncated at cycle {self.truncated_at}")
        return "\n".join(rows)


class Verdict(str, Enum):
    EXACT_CERTIFIED = "ExactCertified"
    APPROXIMATE_ONLY = "ApproximateOnly"
    INCONCLUSIVE = "Inconclusive"


class ReductionReport(Report):
    """Exact or approximate reduction verdict at a periodic orbit."""
    verdict: Verdict
    r: int = Field(..., description="Section dimension of the reduced subsystem")
    m: int = Field(..., description="Iterate bound (minimum domain dimension)")
    subsystem_dimension: int = Field(..., description="r + 1")
    rank_profile: List[int]
    spectral_radius: float
    certificate: CertificateReport
    fiber_residuals: List[float] = Field(default_factory=list)
    contraction: Optional[ContractionProfile] = None

    @property
    def passed(self) -> bool:
        return self.verdict != Verdict.INCONCLUSIVE.value

    def format_table(self) -> str:
        lines = [
            f"verdict: {self.verdict}",
            f"r = {self.r} (subsystem dimension {self.subsystem_dimension}), m = {self.m}",
            f"rank profile: {self.rank_profile}",
            f"spectral radius: {self.spectral_radius:.6g}",
            self.certificate.format_table(),
        ]
        if self.fiber_residuals:
            lines.append("fiber residuals: " + ", ".join(f"{r:.3g}" for r in self.fiber_residuals))
        if self.contraction is not None:
            lines.append(self.contraction.format_table())
        return "\n".join(lines)


class PhaseSample(BaseModel):
    domain_id: str
    x: List[float]
    theta: float


class PhaseReport(Report):
    """Orbit period plus sampled phases and isochron points."""
    period: float
    samples: List[PhaseSample] = Field(default_factory=list)
    isochron_theta: Optional[float] = None
    isochron: List[PhaseSample] = Field(default_factory=list)

    def format_table(self) -> str:
        header = "domain     | theta      | x"
        rows = [f"period: {self.period:.9g}", header, "-" * len(header)]
        for s in self.samples + self.isochron:
            rows.append(f"{s.domain_id:<10} | {s.theta:<10.6f} | {', '.join(f'{v:.6g}' for v in s.x)}")
        return "\n".join(rows)


class DeadbeatResidual(BaseModel):
    x: List[float]
    theta: List[float]
    residual: float


class DeadbeatReport(Report):
    """Residuals and closed-loop spectrum of a deadbeat law."""
    law: str
    k: int
    achieved_rank: int
    required_rank: int
    residuals: List[DeadbeatResidual] = Field(default_factory=list)
    max_residual: Optional[float] = None
    closed_loop_rank: Optional[int] = None
    closed_loop_multipliers: List[Tuple[float, float]] = Field(default_factory=list)
    probe_epsilon: Optional[float] = Field(None, description="Size of the additive perturbation probed")
    perturbed_fixed_point: List[float] = Field(default_factory=list)
    perturbed_multipliers: List[Tuple[float, float]] = Field(default_factory=list)
    recommendation: str = ""

    @property
    def passed(self) -> bool:
        return self.achieved_rank >= self.required_rank

    def format_table(self) -> str:
        lines = [f"law: {self.law} (k={self.k}), rank {self.achieved_rank}/{self.required_rank}"]
        if self.residuals:
            header = "sample | residual"
            lines += [header, "-" * len(header)]
            lines += [f"{i:<6} | {r.residual:.3g}" for i, r in enumerate(self.residuals)]
        if self.closed_loop_rank is not None:
            lines.append(f"closed-loop rank: {self.closed_loop_rank}")
        if self.probe_epsilon is not None:
            radius = max((abs(complex(*m)) for m in self.perturbed_multipliers), default=0.0)
            lines.append(f"perturbation {self.probe_epsilon:g}: spectral radius {radius:.3g}")
        if self.recommendation:
            lines.append(self.recommendation)
        return "\n".join(lines)


class EmbeddingRow(BaseModel):
    legs: int
    steps: int
    max_body_deviation: float
    max_condition_number: float


class EmbeddingReport(Report):
    """Body deviation of closed-loop polypeds from the lateral leg-spring model."""
    rows: List[EmbeddingRow]
    limb_spread: Optional[float] = Field(None, description="Limb state difference after two steps from different limb initial states")

    def format_table(self) -> str:
        header = "legs | steps | max body dev | max cond"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(f"{r.legs:<4} | {r.steps:<5} | {r.max_body_deviation:<12.3g} | {r.max_condition_number:.3g}")
        if self.limb_spread is not None:
            lines.append(f"limb spread after two steps: {self.limb_spread:.3g}")
        return "\n".join(lines)


# Run configuration

class SectionSpec(BaseModel):
    """Either a named section of the model or an explicit coordinate section."""
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = Field(None, description="Named section provided by the model")
    domain: Optional[str] = Field(None, description="Domain of an explicit section")
    coordinate: Optional[int] = Field(None, ge=0, description="Coordinate index whose level set defines the section")
    offset: float = Field(0.0, description="Level value of the coordinate")
    direction: Literal[-1, 1] = Field(1, description="Crossing direction counted as a return")
    guess: Optional[List[float]] = Field(None, description="Base-point guess in full domain coordinates")

    @model_validator(mode='after')
    def named_or_explicit(self):
        if self.name is None and (self.domain is None or self.coordinate is None):
            raise ValueError("Section needs either a name or both domain and coordinate")
        return self


class HorizonSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    time: Optional[float] = Field(None, ge=0)
    events: Optional[int] = Field(None, ge=0)
    cycles: Optional[int] = Field(None, ge=0, description="Cycles of the model's nominal period")


class InitialState(BaseModel):
    model_config = ConfigDict(extra="forbid")

    domain: str
    x: List[float]


class AnalysisOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    radius: float = Field(0.05, ge=0, description="Certificate sample ball radius")
    n_samples: int = Field(16, ge=1)
    k: Optional[int] = Field(None, ge=1, description="Certificate iterate; defaults to the nilpotent index")
    perturbation: float = Field(1e-3, ge=0, description="Magnitude of contraction-profile perturbations")
    fiber_magnitude: float = Field(0.1, ge=0)
    cycles: int = Field(6, ge=3)
    settle_cycles: int = Field(10, ge=0)
    phase_samples: int = Field(8, ge=0)
    isochron_theta: Optional[float] = None
    isochron_points: int = Field(8, ge=0)
    isochron_radius: float = Field(0.05, gt=0)


class ControlOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    law: Literal["onecycle", "multicycle", "linear"] = "onecycle"
    k: int = Field(1, ge=1)
    ball_radius: float = Field(0.05, ge=0)
    n_samples: int = Field(8, ge=1)
    epsilon: float = Field(0.0, ge=0, description="Additive perturbation size for the structural stability probe")


class EmbedOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    legs: List[int] = Field(default_factory=lambda: [4, 6])
    steps: int = Field(3, ge=1)

    @field_validator('legs')
    @classmethod
    def at_least_four(cls, v):
        if any(n < 4 for n in v):
            raise ValueError("A polyped needs at least four legs")
        return v


class RunConfig(BaseModel):
    """Complete command-line run configuration."""
    model_config = ConfigDict(extra="forbid")

    model: str = Field(..., description="Registered model name")
    params: Dict[str, Any] = Field(default_factory=dict, description="Parameter block for the model")
    section: Optional[SectionSpec] = None
    initial_state: Optional[InitialState] = None
    horizon: HorizonSpec = Field(default_factory=HorizonSpec)
    integrator: IntegratorOptions = Field(default_factory=IntegratorOptions)
    analysis: AnalysisOptions = Field(default_factory=AnalysisOptions)
    control: ControlOptions = Field(default_factory=ControlOptions)
    embed: EmbedOptions = Field(default_factory=EmbedOptions)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    output_dir: str = Field("out", description="Directory receiving reports")
    seed: int = Field(0, ge=0)


# JSON hybrid system documents

class BuiltinSpec(BaseModel):
    """A named builtin (field, face, reset or predicate) plus its parameters."""
    model_config = ConfigDict(extra="forbid")

    kind: str
    params: Dict[str, Any] = Field(default_factory=dict)


class DomainSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    dim: int = Field(..., ge=1)
    field: BuiltinSpec
    faces: List[BuiltinSpec] = Field(default_factory=list)


class GuardSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    domain: str
    face: int = Field(..., ge=0)
    target: str
    reset: BuiltinSpec
    predicate: Optional[BuiltinSpec] = None


class SystemDocument(BaseModel):
    """JSON definition of a hybrid system built from registered builtins."""
    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    name: str = "custom"
    domains: List[DomainSpec]
    guards: List[GuardSpec] = Field(default_factory=list)

    @model_validator(mode='after')
    def references_exist(self):
        ids = {d.id for d in self.domains}
        if len(ids) != len(self.domains):
            raise ValueError("Domain ids must be unique")
        for g in self.guards:
            if g.domain not in ids or g.target not in ids:
                raise ValueError(f"Guard references unknown domain: {g.domain} -> {g.target}")
        return self


# Golden report checking

class CheckStatus(Enum):
    """Status of one checked report value."""
    IDENTICAL = "identical"
    IN_TOLERANCE = "in_tolerance"
    IGNORED = "ignored"
    OUTSIDE_TOLERANCE = "outside_tolerance"
    MISSING = "missing"
    TYPE_MISMATCH = "type_mismatch"
    VALUE_MISMATCH = "value_mismatch"
    LENGTH_MISMATCH = "length_mismatch"


class Tolerance(BaseModel):
    """Tolerance for one report path; the greater of the two bounds applies."""
    model_config = ConfigDict(extra="forbid")

    percentage: Optional[float] = Field(None, ge=0, description="Percentage tolerance (0-100)")
    absolute: Optional[float] = Field(None, ge=0, description="Absolute tolerance")
    ignore: bool = Field(False, description="Skip the path entirely")

    @model_validator(mode='after')
    def tolerance_or_ignore(self):
        has_tolerance = self.percentage is not None or self.absolute is not None
        if self.ignore and has_tolerance:
            raise ValueError("Path cannot have tolerance settings and ignore")
        if not self.ignore and not has_tolerance:
            raise ValueError("At least one tolerance (percentage or absolute) must be specified")
        return self


class GoldenProfile(BaseModel):
    """Per-path tolerances used when checking a report against a golden file."""
    model_config = ConfigDict(extra="forbid")

    fields: Dict[str, Tolerance] = Field(default_factory=dict)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)


class CheckedValue(BaseModel):
    model_config = ConfigDict(use_enum_values=True)

    path: str
    passed: bool
    status: CheckStatus
    expected: Any
    actual: Any
    tolerance_applied: Optional[str] = None


class GoldenCheckResult(Report):
    """Result of checking a report against a golden document."""
    values: List[CheckedValue] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.values)

    @property
    def failures(self) -> List[CheckedValue]:
        return [v for v in self.values if not v.passed]

    def format_table(self) -> str:
        shown = self.failures or self.values
        if not shown:
            return "No values checked"
        header = "Path                           | Status     | Expected | Actual"
        rows = [header, "-" * len(header)]
        for v in shown:
            path = v.path if len(v.path) <= 30 else "..." + v.path[-27:]
            exp = str(v.expected)[:8]
            act = str(v.actual)[:8]
            status = "pass" if v.passed else "fail"
            rows.append(f"{path:<30} | {status:<10} | {exp:<8} | {act}")
        return "\n".join(rows)
