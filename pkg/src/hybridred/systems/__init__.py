"""
Model factories registered by name for configuration files.
"""

from .base import (
    MODEL_REGISTRY, ModelBundle, ModelSpec, SectionRecipe, build_model, get_model, list_models, register_model,
)
from .hopper import HopperParams, make_hopper
from .lls import LLSParams, make_lls
from .oracles import (
    HalfTurnParams, LinearOracleParams, ProjectGlueParams, make_halfturn, make_linear_oracle, make_projectglue,
)
from .polyped import PolypedModel, PolypedParams, make_polyped

__all__ = [
    "MODEL_REGISTRY",
    "ModelBundle",
    "ModelSpec",
    "SectionRecipe",
    "build_model",
    "get_model",
    "list_models",
    "register_model",
    "HopperParams",
    "LLSParams",
    "PolypedParams",
    "PolypedModel",
    "HalfTurnParams",
    "ProjectGlueParams",
    "LinearOracleParams",
    "make_hopper",
    "make_lls",
    "make_polyped",
    "make_halfturn",
    "make_projectglue",
    "make_linear_oracle",
]
