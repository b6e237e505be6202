"""
Factory for building models and sections from configuration documents.

Configuration files may be YAML or JSON (JSON is read by the same YAML
loader). A run configuration names a registered model plus its parameter
block; a system document defines a hybrid system from registered builtins.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import yaml

from .errors import ConfigError
from .hybrid import HybridSystem, system_from_document
from .models import IntegratorOptions, LoggingConfig, LoggingFormat, Report, RunConfig, SectionSpec, SystemDocument
from .poincare import PoincareMapHandle, Section
from .systems import ModelBundle, build_model


_logging_config: Optional[LoggingConfig] = None


class SystemFactory:
    """Factory for run configurations, model bundles and system documents."""

    @staticmethod
    def load_config(file_path: Union[str, Path]) -> RunConfig:
        """Load a RunConfig from a YAML or JSON file.

        Raises:
            FileNotFoundError: the file does not exist.
            ValueError: the document does not validate.
        """
        return SystemFactory._parse_config_data(_read(file_path))

    @staticmethod
    def create(config: RunConfig) -> ModelBundle:
        """Build the configured model."""
        return build_model(config.model, config.params)

    @staticmethod
    def create_from_file(file_path: Union[str, Path]) -> ModelBundle:
        return SystemFactory.create(SystemFactory.load_config(file_path))

    @staticmethod
    def load_system(file_path: Union[str, Path]) -> HybridSystem:
        """Build a hybrid system from a JSON system document."""
        data = _read(file_path)
        try:
            document = SystemDocument(**(data or {}))
        except Exception as e:
            raise ValueError(f"Invalid system document: {e}") from e
        return system_from_document(document)

    @staticmethod
    def _parse_config_data(config_data: Optional[Dict[str, Any]]) -> RunConfig:
        try:
            return RunConfig(**(config_data or {}))
        except Exception as e:
            raise ValueError(f"Invalid configuration: {e}") from e


def _read(file_path: Union[str, Path]) -> Any:
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {file_path}")
    with open(file_path, "r") as f:
        return yaml.safe_load(f)


def resolve_section(bundle: ModelBundle, spec: Optional[SectionSpec] = None,
                    opts: Optional[IntegratorOptions] = None) -> Tuple[PoincareMapHandle, Optional[np.ndarray]]:
    """Handle for a named or explicit section plus a fixed-point guess in its coordinates.

    Explicit sections are the level set x[coordinate] = offset in one domain,
    based at the configured guess.

    Raises:
        ConfigError: unknown section or domain, or an explicit section without a guess.
    """
    opts = opts or IntegratorOptions()
    if spec is None or spec.name is not None:
        recipe = bundle.recipe(None if spec is None else spec.name)
        handle = recipe.build(bundle, opts)
        if spec is not None and spec.guess is not None:
            return handle, handle.coordinates(np.asarray(spec.guess, dtype=float))
        return handle, None if recipe.guess is None else np.asarray(recipe.guess, dtype=float)

    if spec.domain not in bundle.system.domains:
        raise ConfigError(f"Model {bundle.name} has no domain '{spec.domain}'",
                          {"known": sorted(bundle.system.domains)})
    if spec.guess is None:
        raise ConfigError("An explicit section needs a base-point guess")
    dim = bundle.system.domain(spec.domain).dim
    if len(spec.guess) != dim or spec.coordinate >= dim:
        raise ConfigError(f"Section guess and coordinate must fit domain '{spec.domain}' of dimension {dim}")
    c, offset = spec.coordinate, spec.offset
    section = Section.at(f"{spec.domain}_x{c + 1}", spec.domain, lambda s: s[c] - offset, spec.guess,
                         direction=spec.direction)
    return PoincareMapHandle(bundle.system, section, opts), None


# Convenience functions for module-level usage
def load_config(file_path: Union[str, Path]) -> RunConfig:
    """Load a RunConfig from a YAML or JSON file."""
    return SystemFactory.load_config(file_path)


def create(config: RunConfig) -> ModelBundle:
    """Build the model a RunConfig names."""
    return SystemFactory.create(config)


def create_from_file(file_path: Union[str, Path]) -> ModelBundle:
    """Build the model named in a configuration file."""
    return SystemFactory.create_from_file(file_path)


def load_system(file_path: Union[str, Path]) -> HybridSystem:
    """Build a hybrid system from a system document file."""
    return SystemFactory.load_system(file_path)


def enable_logging(level=logging.INFO, when="on_fail", format="table"):
    """Enable report logging through the hybridred.report logger.

    No handlers are added; output goes wherever the application's logging
    configuration sends it.

    Args:
        level: Python logging level (default: INFO)
        when: When to log ("always", "on_fail" or "never", default: "on_fail")
        format: Output format ("table" or "json", default: "table")
    """
    global _logging_config
    _logging_config = LoggingConfig(
        enabled=None,
        when=when,
        format=LoggingFormat.TABLE if format == "table" else LoggingFormat.JSON,
        level=level,
    )
    return _logging_config


def log_report(report: Report) -> None:
    """Log a report with the configuration set by `enable_logging`."""
    report.auto_log(_logging_config)
