"""
Model registry: named factories with pydantic parameter models.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Type, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from ..errors import ConfigError
from ..hybrid import HybridState, HybridSystem
from ..models import IntegratorOptions
from ..poincare import PeriodicOrbit, PoincareMapHandle, find_periodic_orbit


logger = logging.getLogger("hybridred.systems")


@dataclass(frozen=True)
class SectionRecipe:
    """How to build a model's named section, plus fixed-point hints."""
    name: str
    build: Callable[["ModelBundle", IntegratorOptions], PoincareMapHandle]
    guess: Optional[Sequence[float]] = None
    fiber: Optional[Callable[[PoincareMapHandle], np.ndarray]] = None
    description: str = ""


@dataclass(frozen=True)
class ModelBundle:
    """A built model: system, named sections, nominal data and controlled variant."""
    name: str
    params: BaseModel
    system: HybridSystem
    sections: Mapping[str, SectionRecipe]
    primary_section: str
    initial_state: HybridState
    controlled: Optional[Callable[[np.ndarray], HybridSystem]] = None
    theta_star: Optional[np.ndarray] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def recipe(self, name: Optional[str] = None) -> SectionRecipe:
        name = name or self.primary_section
        try:
            return self.sections[name]
        except KeyError:
            raise ConfigError(
                f"Model {self.name} has no section '{name}'", {"known": sorted(self.sections)},
            ) from None

    def handle(self, name: Optional[str] = None, opts: Optional[IntegratorOptions] = None) -> PoincareMapHandle:
        return self.recipe(name).build(self, opts or IntegratorOptions())

    def orbit(self, name: Optional[str] = None, opts: Optional[IntegratorOptions] = None) -> PeriodicOrbit:
        recipe = self.recipe(name)
        return find_periodic_orbit(recipe.build(self, opts or IntegratorOptions()), recipe.guess)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    description: str
    params_model: Type[BaseModel]
    builder: Callable[[Any], ModelBundle]

    def parse(self, params: Union[None, Mapping[str, Any], BaseModel] = None) -> BaseModel:
        if isinstance(params, BaseModel):
            return params
        try:
            return self.params_model(**(params or {}))
        except ValidationError as e:
            raise ConfigError(f"Invalid parameters for model {self.name}: {e}") from e

    def build(self, params: Union[None, Mapping[str, Any], BaseModel] = None) -> ModelBundle:
        return self.builder(self.parse(params))


MODEL_REGISTRY: Dict[str, ModelSpec] = {}


def register_model(spec: ModelSpec) -> ModelSpec:
    MODEL_REGISTRY[spec.name] = spec
    return spec


def get_model(name: str) -> ModelSpec:
    try:
        return MODEL_REGISTRY[name]
    except KeyError:
        raise ConfigError(f"Unknown model: {name}", {"known": sorted(MODEL_REGISTRY)}) from None


def build_model(name: str, params: Union[None, Mapping[str, Any], BaseModel] = None) -> ModelBundle:
    return get_model(name).build(params)


def list_models() -> List[Dict[str, Any]]:
    """Registered models with descriptions and parameter JSON schemas."""
    return [
        {"name": spec.name, "description": spec.description, "parameters": spec.params_model.model_json_schema()}
        for spec in sorted(MODEL_REGISTRY.values(), key=lambda s: s.name)
    ]
