"""
hybridred - Reduction and control of periodic orbits in hybrid systems

Executes piecewise-smooth systems with guarded resets, finds periodic
orbits through first-return maps, tests them for exact and approximate
dimension reduction, and synthesizes event-triggered deadbeat control.
"""

from .control import (
    ControlledReturnMap, DeadbeatLaw, OutputConstraint, PolypedEmbeddingController, control_analysis,
    embedding_report, structural_stability_probe, synth_deadbeat_multicycle, synth_deadbeat_onecycle,
    synth_linear_deadbeat,
)
from .comparer import GoldenChecker, check_report
from .errors import ConfigError, HybridError
from .factory import SystemFactory, create, create_from_file, enable_logging, load_config, load_system
from .hybrid import Domain, GuardFace, Horizon, HybridState, HybridSystem, execute, validate
from .models import (
    AnalysisOptions, ControlOptions, DeadbeatReport, EmbeddingReport, IntegratorOptions, LoggingConfig,
    LoggingDetail, LoggingFormat, PhaseReport, ReductionReport, RunConfig, SpectralSummary,
)
from .poincare import PoincareMapHandle, Section, find_periodic_orbit, spectral_summary
from .reduction import analyze_reduction, contraction_profile, phase_analysis
from .systems import build_model, get_model, list_models

__version__ = "0.1.0"

__all__ = [
    "Domain",
    "GuardFace",
    "HybridSystem",
    "HybridState",
    "Horizon",
    "execute",
    "validate",
    "Section",
    "PoincareMapHandle",
    "find_periodic_orbit",
    "spectral_summary",
    "analyze_reduction",
    "contraction_profile",
    "phase_analysis",
    "ControlledReturnMap",
    "DeadbeatLaw",
    "OutputConstraint",
    "PolypedEmbeddingController",
    "synth_deadbeat_onecycle",
    "synth_deadbeat_multicycle",
    "synth_linear_deadbeat",
    "structural_stability_probe",
    "control_analysis",
    "embedding_report",
    "GoldenChecker",
    "check_report",
    "SystemFactory",
    "load_config",
    "load_system",
    "create",
    "create_from_file",
    "enable_logging",
    "build_model",
    "get_model",
    "list_models",
    "HybridError",
    "ConfigError",
    "IntegratorOptions",
    "AnalysisOptions",
    "ControlOptions",
    "RunConfig",
    "SpectralSummary",
    "ReductionReport",
    "PhaseReport",
    "DeadbeatReport",
    "EmbeddingReport",
    "LoggingConfig",
    "LoggingDetail",
    "LoggingFormat",
]
