"""
Vertical two-mass hopper.

The aerial domain carries (y, ydot, x, xdot) for the upper and lower mass;
touchdown is a plastic impact that discards the lower mass. The ground
domain carries (y, ydot) with the spring stiffened by the factor a, and
liftoff restores the lower mass at rest on the ground.

The default ground stiffness multiplier is 3. With a = 2 the return map
through mid-stance has no hopping fixed point and settles on a pure ground
oscillation.
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..hybrid import Domain, GuardFace, HybridState, HybridSystem
from ..poincare import PoincareMapHandle, Section, guard_handle_on_orbit
from .base import ModelBundle, ModelSpec, SectionRecipe, register_model


AERIAL = "aerial"
GROUND = "ground"
TOUCHDOWN = "touchdown"
LIFTOFF = "liftoff"


class HopperParams(BaseModel):
    """Hopper masses, spring, damper and gravity."""
    model_config = ConfigDict(extra="forbid")

    m: float = Field(1.0, gt=0, description="Lower mass")
    mu: float = Field(3.0, gt=0, description="Upper mass")
    k: float = Field(10.0, gt=0, description="Spring stiffness")
    b: float = Field(5.0, gt=0, description="Lower mass damping")
    ell: float = Field(2.0, gt=0, description="Spring rest length")
    a: float = Field(3.0, gt=1, description="Ground stiffness multiplier")
    g: float = Field(2.0, gt=0, description="Gravity")


def make_hopper(params: Optional[HopperParams] = None, a: Optional[float] = None) -> HybridSystem:
    """Two-domain hopper; `a` overrides the ground stiffness multiplier."""
    p = params or HopperParams()
    a = p.a if a is None else float(a)

    def aerial_field(s):
        y, yd, x, xd = s
        spring = p.k * (p.ell - (y - x))
        return np.array([yd, (spring - p.mu * p.g) / p.mu, xd, (-spring - p.b * xd - p.m * p.g) / p.m])

    def ground_field(s):
        y, yd = s
        return np.array([yd, (a * p.k * (p.ell - y) - p.mu * p.g) / p.mu])

    aerial = Domain(AERIAL, 4, aerial_field, (lambda s: s[2],))
    ground = Domain(GROUND, 2, ground_field, (lambda s: p.m * p.g + p.k * (p.ell - s[0]),))
    touchdown = GuardFace(
        AERIAL, 0, lambda s: np.array([s[0], s[1]]), GROUND, lambda s: s[3] < 0, TOUCHDOWN,
    )
    liftoff = GuardFace(
        GROUND, 0, lambda s: np.array([s[0], s[1], 0.0, 0.0]), AERIAL, lambda s: s[1] > 0, LIFTOFF,
    )
    return HybridSystem("hopper", {AERIAL: aerial, GROUND: ground}, (touchdown, liftoff))


def hopper_energy(params: HopperParams, state: HybridState) -> float:
    """Mechanical energy; only the lower-mass damper dissipates it in flight."""
    p = params
    if state.domain_id == AERIAL:
        y, yd, x, xd = state.x
        return float(0.5 * p.mu * yd ** 2 + 0.5 * p.m * xd ** 2 + p.mu * p.g * y + p.m * p.g * x
                     + 0.5 * p.k * (p.ell - (y - x)) ** 2)
    y, yd = state.x
    return float(0.5 * p.mu * yd ** 2 + p.mu * p.g * y + 0.5 * p.a * p.k * (p.ell - y) ** 2)


def kinetic_energy(params: HopperParams, state: HybridState) -> float:
    if state.domain_id == AERIAL:
        return float(0.5 * params.mu * state.x[1] ** 2 + 0.5 * params.m * state.x[3] ** 2)
    return float(0.5 * params.mu * state.x[1] ** 2)


def midstance_section(system: HybridSystem, base=(1.0, 0.0)) -> Section:
    """ydot = 0 in the ground domain, crossed upward (bottom of compression)."""
    return Section.at("midstance", GROUND, lambda s: s[1], base, direction=1)


def lower_mass_fiber(handle: PoincareMapHandle) -> np.ndarray:
    """Downward lower-mass velocity direction in touchdown-section coordinates."""
    return (handle.section.chart.T @ np.array([0.0, 0.0, 0.0, -1.0]))[None, :]


def _build(params: HopperParams) -> ModelBundle:
    system = make_hopper(params)

    def midstance(bundle, opts):
        return PoincareMapHandle(bundle.system, midstance_section(bundle.system), opts,
                                 expected_sequence=(LIFTOFF, TOUCHDOWN))

    def touchdown(bundle, opts):
        return guard_handle_on_orbit(bundle.orbit("midstance", opts), TOUCHDOWN,
                                     expected_sequence=(TOUCHDOWN, LIFTOFF))

    sections = {
        "midstance": SectionRecipe("midstance", midstance, guess=[0.087],
                                   description="ydot = 0 in stance"),
        "touchdown": SectionRecipe("touchdown", touchdown, fiber=lower_mass_fiber,
                                   description="touchdown guard, pre-impact states"),
    }
    return ModelBundle(
        name="hopper", params=params, system=system, sections=sections, primary_section="midstance",
        initial_state=HybridState(GROUND, [1.087, 0.0]),
        controlled=lambda theta: make_hopper(params, a=float(np.atleast_1d(theta)[0])),
        theta_star=np.array([params.a]),
    )


register_model(ModelSpec("hopper", "Vertical two-mass hopper with plastic touchdown", HopperParams, _build))
