"""
Planar polyped: a rigid body with n massive feet on massless actuated limbs.

State layout for n legs (dimension 6 + 4n):
    body pose (x, y, theta), body velocity, foot positions (2n), foot velocities (2n).
Each limb k carries an input force (mu_k, nu_k) acting on its foot and the
opposite force on the body at the hip. Legs split into two alternating
sets; stance feet are pinned to the ground while the other set swings.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..hybrid import Domain, GuardFace, HybridSystem
from .base import ModelSpec, register_model
from .lls import LLSParams


STANCE_A = "stance_A"
STANCE_B = "stance_B"


class PolypedParams(BaseModel):
    """Limb layout and foot masses; the body inertia is the leg-spring model's."""
    model_config = ConfigDict(extra="forbid")

    n_legs: int = Field(4, ge=4, description="Number of legs")
    foot_mass: float = Field(0.1, gt=0, description="Mass of each foot")
    hip_spacing: float = Field(0.3, gt=0, description="Fore-aft distance between hip pairs")
    hip_width: float = Field(0.2, gt=0, description="Lateral hip offset from the body axis")
    reach: float = Field(0.5, gt=0, description="Distance from hip to swing target")
    hips: Optional[List[Tuple[float, float]]] = Field(None, description="Explicit body-frame hip positions")
    targets: Optional[List[Tuple[float, float]]] = Field(None, description="Explicit body-frame swing targets")
    lls: LLSParams = Field(default_factory=LLSParams, description="Template whose body motion is embedded")

    @model_validator(mode="after")
    def check_layout(self):
        for name in ("hips", "targets"):
            value = getattr(self, name)
            if value is not None and len(value) != self.n_legs:
                raise ValueError(f"{name} needs {self.n_legs} entries")
        if self.hips is not None:
            points = np.array(self.hips, dtype=float)
            for i in range(len(points)):
                for j in range(i):
                    if np.allclose(points[i], points[j]):
                        raise ValueError(f"hips {j} and {i} coincide")
        return self


def default_hips(n: int, spacing: float, width: float) -> np.ndarray:
    """Leg k sits in pair k // 2, on the left when k is even."""
    pairs = (n + 1) // 2
    hips = []
    for k in range(n):
        i = k // 2
        side = 1.0 if k % 2 == 0 else -1.0
        hips.append((spacing * ((pairs - 1) / 2.0 - i), side * width))
    return np.array(hips)


def leg_sets(n: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Alternating tripod-like split: diagonal neighbours share a set."""
    a = tuple(k for k in range(n) if (k // 2 + k % 2) % 2 == 0)
    b = tuple(k for k in range(n) if k not in a)
    return a, b


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class PolypedModel:
    params: PolypedParams
    hips: np.ndarray
    targets: np.ndarray
    set_a: Tuple[int, ...]
    set_b: Tuple[int, ...]

    @classmethod
    def from_params(cls, params: Optional[PolypedParams] = None) -> "PolypedModel":
        p = params or PolypedParams()
        hips = np.array(p.hips, dtype=float) if p.hips is not None else default_hips(p.n_legs, p.hip_spacing, p.hip_width)
        if p.targets is not None:
            targets = np.array(p.targets, dtype=float)
        else:
            sides = np.where(hips[:, 1] >= 0, 1.0, -1.0)
            offsets = np.column_stack([np.cos(p.lls.beta) * np.ones(p.n_legs), sides * np.sin(p.lls.beta)])
            targets = hips + p.reach * offsets
        set_a, set_b = leg_sets(p.n_legs)
        return cls(p, hips, targets, set_a, set_b)

    @property
    def n(self) -> int:
        return self.params.n_legs

    @property
    def dim(self) -> int:
        return 6 + 4 * self.n

    @property
    def mass_matrix(self) -> np.ndarray:
        lls = self.params.lls
        return np.diag([lls.m, lls.m, lls.J])

    def stance_set(self, domain_id: str) -> Tuple[int, ...]:
        return self.set_a if domain_id == STANCE_A else self.set_b

    def swing_set(self, domain_id: str) -> Tuple[int, ...]:
        return self.set_b if domain_id == STANCE_A else self.set_a

    def feet(self, x) -> np.ndarray:
        return np.asarray(x[6:6 + 2 * self.n]).reshape(self.n, 2)

    def foot_velocities(self, x) -> np.ndarray:
        return np.asarray(x[6 + 2 * self.n:6 + 4 * self.n]).reshape(self.n, 2)

    def hip_positions(self, x) -> np.ndarray:
        """World-frame hip positions."""
        return x[:2] + self.hips @ rotation(x[2]).T

    def wrench_matrix(self, theta: float, legs: Sequence[int]) -> np.ndarray:
        """Body wrench per unit limb force: columns (mu_k, nu_k) for each leg."""
        R = rotation(theta)
        columns = []
        for k in legs:
            h = R @ self.hips[k]
            columns.append([-1.0, 0.0, h[1]])
            columns.append([0.0, -1.0, -h[0]])
        return np.array(columns).T.reshape(3, 2 * len(legs))

    def dynamics(self, x, forces, stance: Sequence[int]) -> np.ndarray:
        """Time derivative of the state under limb forces (n x 2)."""
        x = np.asarray(x, dtype=float)
        forces = np.asarray(forces, dtype=float).reshape(self.n, 2)
        wrench = self.wrench_matrix(x[2], range(self.n)) @ forces.reshape(-1)
        body_acc = wrench / np.diag(self.mass_matrix)

        velocities = self.foot_velocities(x).copy()
        accelerations = forces / self.params.foot_mass
        pinned = list(stance)
        velocities[pinned] = 0.0
        accelerations[pinned] = 0.0
        return np.concatenate([x[3:6], body_acc, velocities.reshape(-1), accelerations.reshape(-1)])

    def touchdown(self, x, landing: Sequence[int]) -> np.ndarray:
        """Plastic impact: landing feet lose their velocity."""
        post = np.array(x, dtype=float)
        velocities = self.foot_velocities(post).copy()
        velocities[list(landing)] = 0.0
        post[6 + 2 * self.n:6 + 4 * self.n] = velocities.reshape(-1)
        return post

    def system(self, forces: Optional[Callable[[np.ndarray, Tuple[int, ...]], np.ndarray]] = None,
               step_end: Optional[Callable[[np.ndarray, Tuple[int, ...]], float]] = None) -> HybridSystem:
        """Open-loop plant; `step_end` >= 0 while the current stance lasts."""
        forces = forces or (lambda x, stance: np.zeros((self.n, 2)))
        domains, guards = {}, []
        for domain_id, other in ((STANCE_A, STANCE_B), (STANCE_B, STANCE_A)):
            stance = self.stance_set(domain_id)
            swing = self.swing_set(domain_id)
            field = (lambda x, stance=stance: self.dynamics(x, forces(x, stance), stance))
            faces = () if step_end is None else ((lambda x, stance=stance: step_end(x, stance)),)
            domains[domain_id] = Domain(domain_id, self.dim, field, faces)
            if step_end is not None:
                guards.append(GuardFace(domain_id, 0, (lambda x, swing=swing: self.touchdown(x, swing)), other,
                                        name=f"{domain_id}_end"))
        return HybridSystem("polyped", domains, tuple(guards))

    def state(self, body, feet, foot_velocities=None) -> np.ndarray:
        feet = np.asarray(feet, dtype=float).reshape(self.n, 2)
        vel = np.zeros((self.n, 2)) if foot_velocities is None else np.asarray(foot_velocities, dtype=float)
        return np.concatenate([np.asarray(body, dtype=float), feet.reshape(-1), vel.reshape(-1)])


def make_polyped(params: Optional[PolypedParams] = None, forces=None, step_end=None) -> HybridSystem:
    return PolypedModel.from_params(params).system(forces, step_end)


def _build(params: PolypedParams):
    # the closed loop lives with the controller, which imports this module
    from ..control import polyped_bundle

    return polyped_bundle(params)


register_model(ModelSpec("polyped", "Polyped under the leg-spring embedding controller", PolypedParams, _build))
