"""
Closed-form oracle systems with exactly known return maps.

- halfturn: two half-plane domains under rigid rotation with affine
  radial resets; P(r) = x0 + lam^2 (r - x0), period 2 pi.
- projectglue: a three-dimensional domain reset by projection into a
  two-dimensional one; the return map is linear with DP of rank 1.
- linear: a clock domain whose self-reset applies z -> A z + B (theta - theta*),
  so P(z) = A z exactly with period 1.
"""

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..hybrid import Domain, GuardFace, HybridState, HybridSystem
from ..poincare import PoincareMapHandle, Section
from .base import ModelBundle, ModelSpec, SectionRecipe, register_model


def rotation(s):
    return np.array([-s[1], s[0]])


class HalfTurnParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lam: float = Field(0.8, gt=0, le=1, description="Radial reset gain per half turn")
    x0: float = Field(1.0, gt=0, description="Radius of the fixed point")


def make_halfturn(lam: float = 0.8, x0: float = 1.0, theta: float = 0.0) -> HybridSystem:
    """Half-turn oracle; theta perturbs the lower-to-upper reset.

    With theta the return map is x0 + lam^2 (1 + theta)(r - x0) + theta.
    """
    upper = Domain("upper", 2, rotation, (lambda s: s[1],))
    lower = Domain("lower", 2, rotation, (lambda s: -s[1],))
    down = GuardFace(
        "upper", 0, lambda s: np.array([-x0 + lam * (s[0] + x0), 0.0]), "lower",
        lambda s: s[0] < 0, "upper_to_lower",
    )
    up = GuardFace(
        "lower", 0, lambda s: np.array([x0 + lam * (1.0 + theta) * (s[0] - x0) + theta, 0.0]), "upper",
        lambda s: s[0] > 0, "lower_to_upper",
    )
    return HybridSystem("halfturn", {"upper": upper, "lower": lower}, (down, up))


def halfturn_return(r, lam: float = 0.8, x0: float = 1.0, theta: float = 0.0):
    return x0 + lam ** 2 * (1.0 + theta) * (np.asarray(r) - x0) + theta


def halfturn_deadbeat(r, lam: float = 0.8, x0: float = 1.0) -> float:
    """theta returning r to x0 in one cycle."""
    delta = float(r) - x0
    return -lam ** 2 * delta / (1.0 + lam ** 2 * delta)


def halfturn_sections(system: HybridSystem, x0: float):
    upper = Section.at("upper", "upper", lambda s: s[0], (0.0, x0), direction=-1)
    lower = Section.at("lower", "lower", lambda s: s[0], (0.0, -x0), direction=1)
    return upper, lower


def _build_halfturn(params: HalfTurnParams) -> ModelBundle:
    system = make_halfturn(params.lam, params.x0)

    def upper(bundle, opts):
        return PoincareMapHandle(bundle.system, halfturn_sections(bundle.system, params.x0)[0], opts)

    def lower(bundle, opts):
        return PoincareMapHandle(bundle.system, halfturn_sections(bundle.system, params.x0)[1], opts)

    return ModelBundle(
        name="halfturn", params=params, system=system,
        sections={"upper": SectionRecipe("upper", upper, guess=[0.0]),
                  "lower": SectionRecipe("lower", lower, guess=[0.0])},
        primary_section="upper",
        initial_state=HybridState("upper", [0.0, params.x0]),
        controlled=lambda theta: make_halfturn(params.lam, params.x0, float(np.atleast_1d(theta)[0])),
        theta_star=np.zeros(1),
        extras={"period": 2.0 * np.pi},
    )


class ProjectGlueParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    c1: float = Field(0.3, description="Weight of v in the projected coordinate")
    c2: float = Field(0.2, description="Weight of w in the projected coordinate")
    d: float = Field(0.0, description="Lift of the projected coordinate into w")


def make_projectglue(c1: float = 0.3, c2: float = 0.2, d: float = 0.0) -> HybridSystem:
    high = Domain("A", 3, lambda s: np.array([1.0, 0.0, s[1]]), (lambda s: 1.0 - s[0],))
    low = Domain("B", 2, lambda s: np.array([1.0, 0.0]), (lambda s: 1.0 - s[0],))
    project = GuardFace("A", 0, lambda s: np.array([0.0, c1 * s[1] + c2 * s[2]]), "B", None, "project")
    lift = GuardFace("B", 0, lambda s: np.array([0.0, s[1], d * s[1]]), "A", None, "lift")
    return HybridSystem("projectglue", {"A": high, "B": low}, (project, lift))


def projectglue_jacobian(c1: float = 0.3, c2: float = 0.2, d: float = 0.0) -> np.ndarray:
    """Exact DP on the section u = 1/2 in (v, w) coordinates."""
    row = np.array([c1 + 0.5 * c2, c2])
    return np.outer([1.0, d + 0.5], row)


def projectglue_return(z, c1: float = 0.3, c2: float = 0.2, d: float = 0.0) -> np.ndarray:
    return projectglue_jacobian(c1, c2, d) @ np.asarray(z, dtype=float)


def projectglue_section() -> Section:
    return Section.at("half", "A", lambda s: s[0] - 0.5, (0.5, 0.0, 0.0), direction=1)


def _build_projectglue(params: ProjectGlueParams) -> ModelBundle:
    system = make_projectglue(params.c1, params.c2, params.d)

    def half(bundle, opts):
        return PoincareMapHandle(bundle.system, projectglue_section(), opts)

    return ModelBundle(
        name="projectglue", params=params, system=system,
        sections={"half": SectionRecipe("half", half, guess=[0.0, 0.0])},
        primary_section="half",
        initial_state=HybridState("A", [0.5, 0.0, 0.0]),
        extras={"period": 2.0, "jacobian": projectglue_jacobian(params.c1, params.c2, params.d)},
    )


LINEAR_VARIANTS = {
    "companion": ([[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]]),
    "uncontrollable": ([[0.5, 0.0], [0.0, 2.0]], [[1.0], [0.0]]),
    "nilpotent": ([[0.5, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]], [[1.0], [0.0], [0.0]]),
}


class LinearOracleParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: Literal["companion", "uncontrollable", "nilpotent", "custom"] = "nilpotent"
    A: Optional[List[List[float]]] = Field(None, description="Return map matrix for the custom variant")
    B: Optional[List[List[float]]] = Field(None, description="Input matrix for the custom variant")

    @model_validator(mode="after")
    def custom_needs_matrix(self):
        if self.variant == "custom" and self.A is None:
            raise ValueError("custom variant requires A")
        return self

    def matrices(self):
        if self.variant == "custom":
            A = np.atleast_2d(np.array(self.A, dtype=float))
            B = np.zeros((A.shape[0], 1)) if self.B is None else np.atleast_2d(np.array(self.B, dtype=float))
            return A, B
        A, B = LINEAR_VARIANTS[self.variant]
        return np.array(A), np.array(B)


def make_linear_oracle(A, B=None, theta=None, theta_star=None) -> HybridSystem:
    """Clock-driven linear return map z -> A z + B (theta - theta*)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.zeros((n, 1)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
    theta = np.zeros(B.shape[1]) if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    theta_star = np.zeros(B.shape[1]) if theta_star is None else np.atleast_1d(np.asarray(theta_star, dtype=float))
    offset = B @ (theta - theta_star)

    clock = Domain("clock", n + 1, lambda s: np.concatenate([[1.0], np.zeros(n)]), (lambda s: 1.0 - s[0],))
    tick = GuardFace("clock", 0, lambda s: np.concatenate([[0.0], A @ s[1:] + offset]), "clock", None, "tick")
    return HybridSystem("linear", {"clock": clock}, (tick,))


def clock_section(n: int) -> Section:
    return Section.at("half", "clock", lambda s: s[0] - 0.5, np.concatenate([[0.5], np.zeros(n)]), direction=1)


def _build_linear(params: LinearOracleParams) -> ModelBundle:
    A, B = params.matrices()
    n = A.shape[0]

    def half(bundle, opts):
        return PoincareMapHandle(bundle.system, clock_section(n), opts)

    return ModelBundle(
        name="linear", params=params, system=make_linear_oracle(A, B),
        sections={"half": SectionRecipe("half", half, guess=np.zeros(n).tolist())},
        primary_section="half",
        initial_state=HybridState("clock", np.concatenate([[0.5], np.zeros(n)])),
        controlled=lambda theta: make_linear_oracle(A, B, theta),
        theta_star=np.zeros(B.shape[1]),
        extras={"period": 1.0, "A": A, "B": B},
    )


register_model(ModelSpec("halfturn", "Rotating half-plane oracle with affine resets", HalfTurnParams, _build_halfturn))
register_model(ModelSpec("projectglue", "Projection oracle across domains of unequal dimension",
                         ProjectGlueParams, _build_projectglue))
register_model(ModelSpec("linear", "Clock-driven linear return map oracle", LinearOracleParams, _build_linear))
