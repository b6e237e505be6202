"""
Lateral leg-spring runner.

The state of one stance is s = (px, py, theta, vx, vy, omega) where p is
the body position relative to the current foot, theta the body heading and
v, omega the body velocities. A massless linear spring acts from the hip
(offset h along the heading) to the foot. A step ends when the leg extends
back to rest length; the next foot is placed at angle beta from the heading
on the opposite side.
"""

from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from ..errors import HybridError, NoConvergence, NoEventBeforeTmax, StepTimeUndefined
from ..hybrid import Domain, ExecutionTrace, GuardFace, Horizon, HybridState, HybridSystem, execute
from ..models import IntegratorOptions
from ..poincare import PoincareMapHandle, Section
from .base import ModelBundle, ModelSpec, SectionRecipe, register_model


LEFT = "left"
RIGHT = "right"
# foot side relative to the heading, +1 to the left
SIDE_SIGN = {LEFT: 1.0, RIGHT: -1.0}
OTHER = {LEFT: RIGHT, RIGHT: LEFT}


class LLSParams(BaseModel):
    """Body inertia, hip offset, leg spring and touchdown geometry."""
    model_config = ConfigDict(extra="forbid")

    m: float = Field(1.0, gt=0, description="Body mass")
    J: float = Field(0.05, gt=0, description="Body moment of inertia")
    h: float = Field(0.0, ge=0, description="Hip offset along the heading")
    ell: float = Field(1.0, gt=0, description="Leg rest length")
    beta: float = Field(1.0, gt=0, lt=np.pi / 2, description="Touchdown angle from the heading")
    k_leg: float = Field(4.0, gt=0, description="Leg spring stiffness")
    speed: float = Field(1.0, gt=0, description="Forward speed at mid-stance of the nominal gait")


def heading(theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Unit heading e and its left normal n."""
    e = np.array([np.cos(theta), np.sin(theta)])
    return e, np.array([-e[1], e[0]])


def leg_vector(params: LLSParams, s) -> np.ndarray:
    e, _ = heading(s[2])
    return np.asarray(s[:2]) + params.h * e


def leg_force(params: LLSParams, s) -> Tuple[np.ndarray, float]:
    """Spring force on the body and its torque about the center of mass."""
    r = leg_vector(params, s)
    eta = np.linalg.norm(r)
    force = -params.k_leg * (eta - params.ell) * r / eta
    e, _ = heading(s[2])
    torque = params.h * (e[0] * force[1] - e[1] * force[0])
    return force, float(torque)


def stance_field(params: LLSParams):
    def field(s):
        force, torque = leg_force(params, s)
        return np.array([s[3], s[4], s[5], force[0] / params.m, force[1] / params.m, torque / params.J])
    return field


def extension_rate(params: LLSParams, s) -> float:
    """r . rdot; positive while the leg lengthens."""
    e, n = heading(s[2])
    r = leg_vector(params, s)
    rdot = np.asarray(s[3:5]) + params.h * s[5] * n
    return float(r @ rdot)


def place_foot(params: LLSParams, s, side: str) -> np.ndarray:
    """Relative state after placing the next foot on `side` at rest length."""
    e, n = heading(s[2])
    d = np.cos(params.beta) * e + SIDE_SIGN[side] * np.sin(params.beta) * n
    post = np.array(s, dtype=float)
    post[:2] = -(params.h * e + params.ell * d)
    return post


def make_lls(params: Optional[LLSParams] = None) -> HybridSystem:
    p = params or LLSParams()
    field = stance_field(p)

    def face(s):
        return p.ell - np.linalg.norm(leg_vector(p, s))

    domains = {side: Domain(side, 6, field, (face,)) for side in (LEFT, RIGHT)}
    guards = tuple(
        GuardFace(side, 0, (lambda s, nxt=OTHER[side]: place_foot(p, s, nxt)), OTHER[side],
                  lambda s: extension_rate(p, s) > 0, f"{side}_liftoff")
        for side in (LEFT, RIGHT)
    )
    return HybridSystem("lls", domains, guards)


def energy(params: LLSParams, s) -> float:
    eta = np.linalg.norm(leg_vector(params, s))
    return float(0.5 * params.m * (s[3] ** 2 + s[4] ** 2) + 0.5 * params.J * s[5] ** 2
                 + 0.5 * params.k_leg * (eta - params.ell) ** 2)


def mirror(s) -> np.ndarray:
    """Reflection across the heading axis, exchanging left and right steps."""
    s = np.asarray(s, dtype=float)
    return np.array([s[0], -s[1], -s[2], s[3], -s[4], -s[5]])


def midstance_section(params: LLSParams, base) -> Section:
    return Section.at("midstance", LEFT, lambda s: extension_rate(params, s), base, direction=1)


def _liftoff(system: HybridSystem, state: HybridState, opts: IntegratorOptions) -> ExecutionTrace:
    guard = system.guard_named(f"{state.domain_id}_liftoff")
    return execute(system, state, Horizon(events=1), opts, stop_guard=guard)


def symmetric_gait(params: LLSParams, opts: Optional[IntegratorOptions] = None) -> np.ndarray:
    """Mid-stance state of the left-right symmetric gait at the nominal speed.

    From p = (0, -eta), v = (speed, 0) a left step is symmetric in time, so
    the gait closes when liftoff happens at the mirror of the touchdown angle.
    """
    opts = opts or IntegratorOptions()
    system = make_lls(params)

    def start(eta):
        return np.array([-params.h, -eta, 0.0, params.speed, 0.0, 0.0])

    def mismatch(eta):
        end = _liftoff(system, HybridState(LEFT, start(eta)), opts).final.x
        r = leg_vector(params, end)
        return float(np.arctan2(r[1], r[0]) + params.beta)

    grid = np.linspace(0.3, 0.995, 15) * params.ell
    values = []
    for eta in grid:
        try:
            values.append(mismatch(eta))
        except HybridError:
            values.append(np.nan)
    for a, b, fa, fb in zip(grid, grid[1:], values, values[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and np.sign(fa) != np.sign(fb):
            return start(brentq(mismatch, a, b, xtol=1e-13))
    raise NoConvergence("No symmetric gait found for these parameters", {"mismatch": values})


def predict_step(params: LLSParams, body, foot, side: str,
                 opts: Optional[IntegratorOptions] = None) -> Tuple[float, np.ndarray]:
    """Time to the end of the current step and the absolute body state then.

    `body` is (x, y, theta, xdot, ydot, omega) in world coordinates.

    Raises:
        StepTimeUndefined: the leg never returns to rest length.
    """
    body = np.asarray(body, dtype=float)
    s = body.copy()
    s[:2] = body[:2] - np.asarray(foot, dtype=float)
    try:
        trace = _liftoff(make_lls(params), HybridState(side, s), opts or IntegratorOptions())
    except NoEventBeforeTmax as e:
        raise StepTimeUndefined(f"Leg-spring step from {side} stance does not end", e.details) from e
    if trace.stop_reason != "guard":
        raise StepTimeUndefined(f"Leg-spring step from {side} stance does not end")
    end = trace.final.x.copy()
    end[:2] += foot
    return trace.total_time, end


def absolute_path(trace: ExecutionTrace, foot0=(0.0, 0.0)) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray]]:
    """World-frame body states along a trace.

    Each reset moves the foot by p_pre - p_post so the body stays continuous.
    Returns the step times, body states and the foot placements.
    """
    feet = [np.asarray(foot0, dtype=float)]
    for event in trace.events:
        feet.append(feet[-1] + event.pre.x[:2] - event.post.x[:2])
    times, states = [], []
    for seg in trace.segments:
        foot = feet[sum(1 for e in trace.events if e.t <= seg.t_start)]
        for t in seg.step_times:
            s = seg(t)
            times.append(float(t))
            states.append(np.concatenate([s[:2] + foot, s[2:]]))
    return np.array(times), np.array(states), feet


def absolute_state_at(trace: ExecutionTrace, feet: List[np.ndarray], t: float) -> np.ndarray:
    """World-frame body state at time t, given the feet from `absolute_path`."""
    s = trace.state_at(t).x
    foot = feet[sum(1 for e in trace.events if e.t <= t)]
    return np.concatenate([s[:2] + foot, s[2:]])


def _build(params: LLSParams) -> ModelBundle:
    system = make_lls(params)

    def midstance(bundle, opts):
        base = symmetric_gait(params, opts)
        return PoincareMapHandle(bundle.system, midstance_section(params, base), opts,
                                 expected_sequence=("left_liftoff", "right_liftoff"))

    return ModelBundle(
        name="lls", params=params, system=system,
        sections={"midstance": SectionRecipe("midstance", midstance, guess=[0.0] * 5,
                                             description="leg at maximum compression in a left step")},
        primary_section="midstance",
        initial_state=HybridState(LEFT, [0.0, -0.86 * params.ell, 0.0, params.speed, 0.0, 0.0]),
    )


register_model(ModelSpec("lls", "Lateral leg-spring runner", LLSParams, _build))
