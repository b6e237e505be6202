"""
Event-triggered parameterized control of hybrid return maps.

A parameter theta is held constant between guard events, which turns the
first-return map into a discrete-time control system x' = P(x, theta).
This module synthesizes deadbeat laws for it (one cycle, several cycles,
or linear feedback placing every closed-loop eigenvalue at zero), probes
the structural stability of the resulting loops, and implements the
polyped controller that embeds the lateral leg-spring body motion.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import (
    ConfigError, NoConvergence, NotStabilizable, RankDeficient, SingularJacobian, WrenchInfeasible,
)
from .hybrid import Domain, ExecutionTrace, GuardFace, Horizon, HybridState, HybridSystem, execute
from .models import (
    ControlOptions, DeadbeatReport, DeadbeatResidual, EmbedOptions, EmbeddingReport, EmbeddingRow,
    IntegratorOptions,
)
from .numerics import (
    complex_pairs, eigen, fd_jacobian, kernel_basis, newton_solve, numerical_rank, orthonormal_basis,
)
from .poincare import RANK_ATOL, RANK_TOL, PoincareMapHandle, Section, sample_ball
from .systems.base import ModelBundle, SectionRecipe
from .systems.lls import (
    LEFT, RIGHT, LLSParams, absolute_path, absolute_state_at, extension_rate, leg_force, leg_vector,
    make_lls, place_foot, predict_step, symmetric_gait,
)
from .systems.polyped import STANCE_A, STANCE_B, PolypedModel, PolypedParams, rotation


logger = logging.getLogger("hybridred.control")

DEADBEAT_TOL = 1e-11
DEADBEAT_ACCEPT = 1e-9
CONSTRAINT_TOL = 1e-9
WRENCH_RESIDUAL = 1e-10
# the embedded body must follow the leg-spring model closely, so both run tight
EMBED_OPTIONS = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-13)


@dataclass(frozen=True)
class ControlledReturnMap:
    """P(z, theta) on the section of `nominal`, which is based at xi."""
    builder: Callable[[np.ndarray], HybridSystem]
    nominal: PoincareMapHandle
    theta_star: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.atleast_1d(np.asarray(self.theta_star, dtype=float)))

    @classmethod
    def from_bundle(cls, bundle: ModelBundle, section: Optional[str] = None,
                    opts: Optional[IntegratorOptions] = None) -> "ControlledReturnMap":
        if bundle.controlled is None:
            raise ConfigError(f"Model {bundle.name} has no controlled variant")
        orbit = bundle.orbit(section, opts)
        return cls(bundle.controlled, orbit.handle, bundle.theta_star)

    @property
    def dim(self) -> int:
        return self.nominal.dim

    @property
    def p(self) -> int:
        return self.theta_star.size

    def with_builder(self, builder: Callable[[np.ndarray], HybridSystem]) -> "ControlledReturnMap":
        """Same section and nominal input, different plant."""
        return replace(self, builder=builder)

    def handle(self, theta) -> PoincareMapHandle:
        return replace(self.nominal, system=self.builder(np.atleast_1d(theta)), jacobian_fn=None)

    def sequence(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.p)
        if thetas.shape[0] == 0:
            raise ValueError("A controlled return needs at least one parameter per cycle")
        return thetas

    def return_with_traces(self, z, thetas) -> Tuple[np.ndarray, List[ExecutionTrace]]:
        z = np.asarray(z, dtype=float)
        traces = []
        for theta in self.sequence(thetas):
            z, trace = self.handle(theta).return_with_trace(z)
            traces.append(trace)
        return z, traces

    def controlled_return(self, z, thetas) -> np.ndarray:
        """P_l(z, (theta_1, ..., theta_l)), applying theta_i on cycle i."""
        return self.return_with_traces(z, thetas)[0]

    def step(self, z, theta) -> np.ndarray:
        return self.handle(theta).first_return(z)

    def linearize_control(self, z=None, theta=None) -> Tuple[np.ndarray, np.ndarray]:
        """Central-difference blocks (D_x P, D_theta P), by default at (xi, theta*)."""
        z = np.zeros(self.dim) if z is None else np.asarray(z, dtype=float)
        theta = self.theta_star if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
        A = fd_jacobian(lambda w: self.step(w, theta), z)
        B = fd_jacobian(lambda t: self.step(z, t), theta)
        return A, B

    def stacked_input_jacobian(self, k: int, z=None) -> np.ndarray:
        """D_(theta_1..theta_k) P_k at (z, (theta*, ..., theta*))."""
        z = np.zeros(self.dim) if z is None else np.asarray(z, dtype=float)
        return fd_jacobian(lambda T: self.controlled_return(z, T), np.tile(self.theta_star, k))


class LawKind(str, Enum):
    ONE_CYCLE = "onecycle"
    MULTI_CYCLE = "multicycle"
    LINEAR_FEEDBACK = "linear"


@dataclass(frozen=True)
class OutputConstraint:
    """Output h on section coordinates, driven to zero by a partial deadbeat law."""
    h: Callable[[np.ndarray], np.ndarray]
    dim: int

    def __call__(self, z) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.h(np.asarray(z, dtype=float)), dtype=float))

    def jacobian(self, z) -> np.ndarray:
        return fd_jacobian(self, z)


@dataclass(frozen=True)
class DeadbeatLaw:
    """Feedback theta = psi(z); nonlinear kinds solve for psi on demand."""
    kind: LawKind
    plant: ControlledReturnMap
    k: int = 1
    gain: Optional[np.ndarray] = None
    constraint: Optional[OutputConstraint] = None
    achieved_rank: int = 0
    required_rank: int = 0
    tol: float = DEADBEAT_TOL
    max_iter: int = 30

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("A deadbeat horizon needs k >= 1")
        if self.kind == LawKind.LINEAR_FEEDBACK:
            if self.gain is None:
                raise ValueError("A linear feedback law needs a gain")
            gain = np.atleast_2d(np.asarray(self.gain, dtype=float))
            if gain.shape != (self.plant.p, self.plant.dim):
                raise ValueError(f"Gain must be {self.plant.p}x{self.plant.dim}, got {gain.shape}")
            object.__setattr__(self, "gain", gain)

    @property
    def horizon(self) -> int:
        """Cycles per application of psi."""
        return self.k if self.kind == LawKind.MULTI_CYCLE else 1

    def _output(self, z_next: np.ndarray) -> np.ndarray:
        return z_next if self.constraint is None else self.constraint(z_next)

    def psi(self, z) -> np.ndarray:
        """Parameter sequence for the next `horizon` cycles, one row per cycle."""
        z = np.asarray(z, dtype=float)
        plant = self.plant
        if self.kind == LawKind.LINEAR_FEEDBACK:
            return (plant.theta_star + self.gain @ z)[None, :]

        def residual(T):
            return self._output(plant.controlled_return(z, T))

        T0 = np.tile(plant.theta_star, self.horizon)
        square = T0.size == plant.dim and self.constraint is None
        try:
            T = newton_solve(residual, T0, tol=self.tol, max_iter=self.max_iter, least_squares=not square)
        except SingularJacobian:
            T = self._least_squares(residual, T0)
        except NoConvergence as e:
            T = _accept_or_raise(e)
        return T.reshape(self.horizon, plant.p)

    def _least_squares(self, residual, T0):
        try:
            return newton_solve(residual, T0, tol=self.tol, max_iter=self.max_iter, least_squares=True)
        except NoConvergence as e:
            return _accept_or_raise(e)

    def __call__(self, z) -> np.ndarray:
        return self.psi(z)

    def closed_loop_return(self, z, plant: Optional[ControlledReturnMap] = None) -> np.ndarray:
        """One application of the law: P_horizon(z, psi(z)), optionally on another plant."""
        return (plant or self.plant).controlled_return(z, self.psi(z))

    def _blocks(self, plant: ControlledReturnMap, z: np.ndarray, T: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        A = fd_jacobian(lambda w: plant.controlled_return(w, T), z)
        B = fd_jacobian(lambda S: plant.controlled_return(z, S), T)
        return A, B

    def psi_jacobian(self, z=None, blocks: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
        """D psi by the implicit function theorem, stacked over the horizon."""
        if self.kind == LawKind.LINEAR_FEEDBACK:
            return self.gain
        z = np.zeros(self.plant.dim) if z is None else np.asarray(z, dtype=float)
        T = self.psi(z).reshape(-1)
        A, B = blocks if blocks is not None else self._blocks(self.plant, z, T)
        if self.constraint is not None:
            H = self.constraint.jacobian(self.plant.controlled_return(z, T))
            A, B = H @ A, H @ B
        return -np.linalg.pinv(B, rcond=1e-8) @ A

    def closed_loop_jacobian(self, z=None, plant: Optional[ControlledReturnMap] = None) -> np.ndarray:
        """D[P(z, psi(z))] = D_x P + D_theta P D psi, free of differencing through Newton."""
        z = np.zeros(self.plant.dim) if z is None else np.asarray(z, dtype=float)
        T = self.psi(z).reshape(-1)
        A, B = self._blocks(plant or self.plant, z, T)
        if plant is None or plant is self.plant:
            return A + B @ self.psi_jacobian(z, (A, B))
        return A + B @ self.psi_jacobian(z)

    def closed_loop_handle(self) -> "ClosedLoopHandle":
        """Handle on the closed-loop map, usable by the reduction analysis."""
        nominal = self.plant.nominal
        return ClosedLoopHandle(
            nominal.system, nominal.section, nominal.opts, nominal.max_events,
            nominal.expected_sequence, nominal.strict, jacobian_fn=self.closed_loop_jacobian, law=self,
        )


def _accept_or_raise(error: NoConvergence) -> np.ndarray:
    if error.details.get("residual", np.inf) <= DEADBEAT_ACCEPT:
        logger.debug("accepting deadbeat input with residual %.2e", error.details["residual"])
        return np.array(error.details["point"])
    raise error


@dataclass(frozen=True)
class ClosedLoopHandle(PoincareMapHandle):
    """Return map of the plant with a deadbeat law installed."""
    law: Optional[DeadbeatLaw] = None

    def return_with_trace(self, z) -> Tuple[np.ndarray, ExecutionTrace]:
        z_next, traces = self.law.plant.return_with_traces(z, self.law.psi(z))
        return z_next, traces[-1]


def synth_deadbeat_onecycle(plant: ControlledReturnMap, constraint: Optional[OutputConstraint] = None,
                            tol: float = DEADBEAT_TOL) -> DeadbeatLaw:
    """One-cycle law solving P(z, theta) = xi, or h(P(z, theta)) = 0 with a constraint.

    Raises:
        RankDeficient: D_theta P (or D_theta h o P) lacks the needed rank.
    """
    _, B = plant.linearize_control()
    center = np.zeros(plant.dim)
    if constraint is not None:
        value = constraint(center)
        if np.linalg.norm(value) > CONSTRAINT_TOL:
            raise ConfigError("Output constraint does not vanish at the fixed point",
                              {"value": [float(v) for v in value]})
        M, required = constraint.jacobian(center) @ B, constraint.dim
    else:
        M, required = B, plant.dim
    achieved = numerical_rank(M, RANK_TOL, RANK_ATOL)
    logger.info("one-cycle deadbeat: input rank %d of %d", achieved, required)
    if achieved < required:
        raise RankDeficient(
            f"Input rank {achieved} below {required}; try a multi-cycle law", achieved, required,
        )
    return DeadbeatLaw(LawKind.ONE_CYCLE, plant, 1, constraint=constraint,
                       achieved_rank=achieved, required_rank=required, tol=tol)


def synth_deadbeat_multicycle(plant: ControlledReturnMap, k: int, tol: float = DEADBEAT_TOL) -> DeadbeatLaw:
    """Law choosing theta_1..theta_k so that P_k(z, theta) = xi.

    Raises:
        RankDeficient: the stacked input Jacobian lacks rank dim at this k.
    """
    if k == 1:
        return synth_deadbeat_onecycle(plant, tol=tol)
    achieved = numerical_rank(plant.stacked_input_jacobian(k), RANK_TOL, RANK_ATOL)
    logger.info("%d-cycle deadbeat: stacked input rank %d of %d", k, achieved, plant.dim)
    if achieved < plant.dim:
        raise RankDeficient(
            f"Stacked input rank {achieved} below {plant.dim} at k={k}", achieved, plant.dim,
        )
    return DeadbeatLaw(LawKind.MULTI_CYCLE, plant, k, achieved_rank=achieved, required_rank=plant.dim, tol=tol)


def _complement(basis: np.ndarray, W: np.ndarray, count: int) -> np.ndarray:
    """`count` orthonormal directions of span W orthogonal to `basis`."""
    projected = W - basis @ (basis.T @ W)
    U, _, _ = np.linalg.svd(projected, full_matrices=False)
    return U[:, :count]


def _steer(A: np.ndarray, B: np.ndarray, e: np.ndarray, into: np.ndarray, tol: float) -> np.ndarray:
    """Input u with A e + B u in span(into)."""
    M = np.hstack([B, -into])
    sol = np.linalg.lstsq(M, -A @ e, rcond=None)[0]
    residual = float(np.linalg.norm(M @ sol + A @ e))
    if residual > tol:
        raise NotStabilizable("Target subspace is not controlled invariant", {"residual": residual})
    return sol[:B.shape[1]]


def synth_linear_deadbeat(A, B, target=None, tol: float = 1e-9) -> Tuple[np.ndarray, int]:
    """Gain Psi and horizon k with range((A + B Psi)^k) inside the target subspace.

    W_0 is the target and W_i the states that one input can push into
    W_(i-1); the gain maps each new layer into the previous one, so the
    closed loop is nilpotent on the quotient. The target defaults to {0}.

    Raises:
        NotStabilizable: some states can never be steered into the target.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    scale = max(1.0, float(np.linalg.norm(A)), float(np.linalg.norm(B)))
    S = np.zeros((n, 0)) if target is None else orthonormal_basis(np.asarray(target, dtype=float).reshape(n, -1))

    inputs = [_steer(A, B, S[:, j], S, tol * scale) for j in range(S.shape[1])]
    layers = [S]
    reach = S
    while reach.shape[1] < n:
        M = orthonormal_basis(np.hstack([reach, B]))
        preimage = kernel_basis((np.eye(n) - M @ M.T) @ A, RANK_TOL, 1e-12 * scale)
        W = orthonormal_basis(np.hstack([reach, preimage]))
        grown = W.shape[1] - reach.shape[1]
        if grown <= 0:
            raise NotStabilizable(
                f"Only {reach.shape[1]} of {n} directions can be steered into the target",
                {"reachable_dim": int(reach.shape[1]), "dim": n,
                 "eigenvalues": complex_pairs(eigen(A).eigenvalues)},
            )
        layer = _complement(reach, W, grown)
        inputs += [_steer(A, B, layer[:, j], reach, tol * scale) for j in range(grown)]
        layers.append(layer)
        reach = np.hstack([reach, layer])

    E = np.hstack(layers)
    U = np.column_stack(inputs) if inputs else np.zeros((B.shape[1], 0))
    gain = U @ E.T
    k = len(layers) - 1
    logger.info("linear deadbeat: horizon %d on a %d-dimensional section", k, n)
    return gain, k


@dataclass(frozen=True)
class StabilityProbe:
    fixed_point: np.ndarray
    multipliers: np.ndarray
    residual: float


def structural_stability_probe(
    law: DeadbeatLaw,
    epsilon: float = 0.0,
    perturbation: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    plant: Optional[ControlledReturnMap] = None,
) -> StabilityProbe:
    """Fixed point and multipliers of the closed loop under a bounded perturbation.

    The perturbed map is P~(z, psi(z)) + epsilon g(z), where P~ is `plant`
    (default: the law's own plant) and g defaults to the unit diagonal.

    Raises:
        NoConvergence: no fixed point of the perturbed loop was found.
    """
    n = law.plant.dim
    g = perturbation or (lambda z: np.ones(n) / np.sqrt(n))

    def loop(z):
        out = law.closed_loop_return(z, plant)
        return out + epsilon * np.asarray(g(z), dtype=float) if epsilon else out

    def loop_jacobian(z):
        J = law.closed_loop_jacobian(z, plant)
        return J + epsilon * fd_jacobian(g, z) if epsilon else J

    def residual(z):
        return loop(z) - z

    z0 = np.zeros(n)
    try:
        z = newton_solve(residual, z0, tol=DEADBEAT_TOL, jacobian=lambda w: loop_jacobian(w) - np.eye(n))
    except NoConvergence as e:
        z = _accept_or_raise(e)
    res = float(np.linalg.norm(residual(z)))
    multipliers = eigen(loop_jacobian(z)).eigenvalues
    logger.info("perturbed closed loop: |fixed point| %.3e, spectral radius %.3e",
                np.linalg.norm(z), np.max(np.abs(multipliers)) if multipliers.size else 0.0)
    return StabilityProbe(z, multipliers, res)


def build_law(plant: ControlledReturnMap, options: ControlOptions) -> DeadbeatLaw:
    if options.law == LawKind.ONE_CYCLE.value:
        return synth_deadbeat_onecycle(plant)
    if options.law == LawKind.MULTI_CYCLE.value:
        return synth_deadbeat_multicycle(plant, options.k)
    A, B = plant.linearize_control()
    gain, k = synth_linear_deadbeat(A, B)
    return DeadbeatLaw(LawKind.LINEAR_FEEDBACK, plant, k, gain=gain,
                       achieved_rank=plant.dim, required_rank=plant.dim)


def deadbeat_report(law: DeadbeatLaw, options: Optional[ControlOptions] = None, seed: int = 0) -> DeadbeatReport:
    """Residuals on a ball around xi plus the closed-loop rank and multipliers.

    The ball radius is ball_radius |xi|, or ball_radius itself when xi is
    at the origin. Linear laws are run for their full horizon.
    """
    options = options or ControlOptions()
    plant = law.plant
    center = np.zeros(plant.dim)
    xi_norm = float(np.linalg.norm(plant.nominal.state(center).x))
    radius = options.ball_radius * xi_norm if xi_norm > 1e-12 else options.ball_radius
    rounds = law.k if law.kind == LawKind.LINEAR_FEEDBACK else 1

    residuals = []
    for z in sample_ball(np.random.default_rng(seed), plant.dim, radius, options.n_samples):
        theta = law.psi(z)
        w = z
        for _ in range(rounds):
            w = law.closed_loop_return(w)
        residuals.append(DeadbeatResidual(
            x=[float(v) for v in z], theta=[float(v) for v in theta.reshape(-1)],
            residual=float(np.linalg.norm(w)),
        ))

    J = law.closed_loop_jacobian(center)
    report = DeadbeatReport(
        law=law.kind.value, k=law.k, achieved_rank=law.achieved_rank, required_rank=law.required_rank,
        residuals=residuals, max_residual=max((r.residual for r in residuals), default=None),
        closed_loop_rank=numerical_rank(J, RANK_TOL, RANK_ATOL),
        closed_loop_multipliers=complex_pairs(eigen(J).eigenvalues),
    )
    if options.epsilon > 0:
        probe = structural_stability_probe(law, options.epsilon)
        report.probe_epsilon = options.epsilon
        report.perturbed_fixed_point = [float(v) for v in probe.fixed_point]
        report.perturbed_multipliers = complex_pairs(probe.multipliers)
    return report


def control_analysis(bundle: ModelBundle, options: Optional[ControlOptions] = None, section: Optional[str] = None,
                     opts: Optional[IntegratorOptions] = None, seed: int = 0) -> DeadbeatReport:
    """Synthesize the configured law; a rank failure becomes a report with advice."""
    options = options or ControlOptions()
    plant = ControlledReturnMap.from_bundle(bundle, section, opts)
    try:
        law = build_law(plant, options)
    except RankDeficient as e:
        k = options.k if options.law == LawKind.MULTI_CYCLE.value else 1
        logger.warning("deadbeat synthesis failed: %s", e.message)
        return DeadbeatReport(
            law=options.law, k=k, achieved_rank=e.achieved, required_rank=e.required,
            recommendation=f"Input rank {e.achieved}/{e.required} at k={k}: try a multi-cycle law with k > {k}",
        )
    return deadbeat_report(law, options, seed)


# Polyped embedding

@dataclass(frozen=True)
class PolypedEmbeddingController:
    """Drives a polyped so its body follows the lateral leg-spring model exactly.

    The closed-loop state appends the current leg-spring foot (2) and the
    held swing forces (2n) to the plant state. Both are recomputed at each
    step-end reset, so within a step the swing feet move with constant
    acceleration toward their targets at the predicted step end.
    """
    model: PolypedModel
    opts: IntegratorOptions = EMBED_OPTIONS

    def __post_init__(self):
        if min(len(self.model.set_a), len(self.model.set_b)) < 2:
            raise ConfigError("Each leg set needs at least two legs")

    @property
    def lls(self) -> LLSParams:
        return self.model.params.lls

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def dim(self) -> int:
        return self.model.dim + 2 + 2 * self.n

    def split(self, X) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        d = self.model.dim
        X = np.asarray(X, dtype=float)
        return X[:d], X[d:d + 2], X[d + 2:].reshape(self.n, 2)

    @staticmethod
    def side(domain_id: str) -> str:
        return LEFT if domain_id == STANCE_A else RIGHT

    @staticmethod
    def relative(x, foot) -> np.ndarray:
        s = np.array(x[:6], dtype=float)
        s[:2] -= foot
        return s

    def allocate(self, X, domain_id: str, condition: bool = False) -> Tuple[np.ndarray, Optional[float]]:
        """Limb forces: held swing forces plus the minimum-norm stance allocation.

        Raises:
            WrenchInfeasible: the stance legs cannot produce the needed wrench.
        """
        x, foot, held = self.split(X)
        force, torque = leg_force(self.lls, self.relative(x, foot))
        stance = list(self.model.stance_set(domain_id))
        swing = list(self.model.swing_set(domain_id))
        b = np.array([force[0], force[1], torque]) - self.model.wrench_matrix(x[2], swing) @ held[swing].reshape(-1)
        W = self.model.wrench_matrix(x[2], stance)
        u = np.linalg.lstsq(W, b, rcond=None)[0]
        residual = float(np.linalg.norm(W @ u - b))
        if residual > WRENCH_RESIDUAL * (1.0 + float(np.linalg.norm(b))):
            raise WrenchInfeasible(f"Stance legs {stance} cannot produce the body wrench (residual {residual:.2e})",
                                   np.linalg.cond(W))
        forces = held.copy()
        forces[stance] = u.reshape(-1, 2)
        return forces, (float(np.linalg.cond(W)) if condition else None)

    def hold(self, x, foot, domain_id: str) -> np.ndarray:
        """Swing forces reaching each body-frame target at the predicted step end."""
        tau, body_end = predict_step(self.lls, x[:6], foot, self.side(domain_id), self.opts)
        R = rotation(body_end[2])
        feet = self.model.feet(x)
        velocities = self.model.foot_velocities(x)
        mass = self.model.params.foot_mass
        held = np.zeros((self.n, 2))
        for k in self.model.swing_set(domain_id):
            target = body_end[:2] + R @ self.model.targets[k]
            held[k] = 2.0 * mass * (target - feet[k] - tau * velocities[k]) / tau ** 2
        return held

    def _field(self, domain_id: str):
        stance = self.model.stance_set(domain_id)
        tail = np.zeros(2 + 2 * self.n)

        def field(X):
            forces, _ = self.allocate(X, domain_id)
            return np.concatenate([self.model.dynamics(self.split(X)[0], forces, stance), tail])
        return field

    def _face(self, X) -> float:
        x, foot, _ = self.split(X)
        return self.lls.ell - float(np.linalg.norm(leg_vector(self.lls, self.relative(x, foot))))

    def _extending(self, X) -> bool:
        x, foot, _ = self.split(X)
        return extension_rate(self.lls, self.relative(x, foot)) > 0

    def _reset(self, target: str):
        def reset(X):
            x, foot, _ = self.split(X)
            # landing feet impact plastically; pinned feet are already at rest
            x = self.model.touchdown(x, range(self.n))
            post = place_foot(self.lls, self.relative(x, foot), self.side(target))
            new_foot = x[:2] - post[:2]
            return np.concatenate([x, new_foot, self.hold(x, new_foot, target).reshape(-1)])
        return reset

    def closed_loop(self) -> HybridSystem:
        domains, guards = {}, []
        for domain_id, other in ((STANCE_A, STANCE_B), (STANCE_B, STANCE_A)):
            domains[domain_id] = Domain(domain_id, self.dim, self._field(domain_id), (self._face,))
            guards.append(GuardFace(domain_id, 0, self._reset(other), other, self._extending, f"{domain_id}_end"))
        return HybridSystem("polyped", domains, tuple(guards))

    def initialize(self, body, foot, feet=None, foot_velocities=None, domain_id: str = STANCE_A) -> HybridState:
        """Closed-loop state mid-step; feet default to their targets, at rest."""
        body = np.asarray(body, dtype=float)
        if feet is None:
            feet = body[:2] + self.model.targets @ rotation(body[2]).T
        x = self.model.state(body, feet, foot_velocities)
        foot = np.asarray(foot, dtype=float)
        return HybridState(domain_id, np.concatenate([x, foot, self.hold(x, foot, domain_id).reshape(-1)]))

    def simulate(self, state: HybridState, steps: int) -> ExecutionTrace:
        return execute(self.closed_loop(), state, Horizon(events=steps), self.opts)

    def stride_map(self, y, domain_id: str = STANCE_A) -> np.ndarray:
        """Two steps from a step start: (plant state, leg-spring foot) in and out."""
        y = np.asarray(y, dtype=float)
        x, foot = y[:self.model.dim], y[self.model.dim:]
        X = np.concatenate([x, foot, self.hold(x, foot, domain_id).reshape(-1)])
        final = self.simulate(HybridState(domain_id, X), 2).final.x
        return final[:self.model.dim + 2]

    def limb_states(self, X) -> np.ndarray:
        return self.split(X)[0][6:]

    def compare_with_lls(self, steps: int = 3, start=None, foot=(0.0, 0.0)) -> EmbeddingRow:
        """Largest body deviation from a standalone leg-spring run over `steps` steps."""
        start = symmetric_gait(self.lls, self.opts) if start is None else np.asarray(start, dtype=float)
        foot = np.asarray(foot, dtype=float)
        reference = execute(make_lls(self.lls), HybridState(LEFT, start), Horizon(events=steps), self.opts)
        _, _, feet = absolute_path(reference, foot)

        body0 = start.copy()
        body0[:2] += foot
        trace = self.simulate(self.initialize(body0, foot), steps)
        t_end = min(trace.total_time, reference.total_time)
        deviation, condition = 0.0, 0.0
        for seg in trace.segments:
            for t in seg.step_times:
                if t > t_end:
                    continue
                X = seg(t)
                ref = absolute_state_at(reference, feet, t)
                deviation = max(deviation, float(np.max(np.abs(X[:6] - ref))))
                condition = max(condition, self.allocate(X, seg.domain_id, condition=True)[1])
        logger.info("%d legs over %d steps: body deviation %.3e, allocation condition %.3g",
                    self.n, steps, deviation, condition)
        return EmbeddingRow(legs=self.n, steps=steps, max_body_deviation=deviation, max_condition_number=condition)

    def limb_spread(self, seed: int = 0, start=None) -> float:
        """Limb state difference after two steps from two different limb initializations."""
        start = symmetric_gait(self.lls, self.opts) if start is None else np.asarray(start, dtype=float)
        foot = np.zeros(2)
        rng = np.random.default_rng(seed)
        first = self.initialize(start, foot)
        feet = self.model.feet(first.x[:self.model.dim]) + rng.normal(0.0, 0.05, (self.n, 2))
        second = self.initialize(start, foot, feet, rng.normal(0.0, 0.1, (self.n, 2)))
        a = self.limb_states(self.simulate(first, 2).final.x)
        b = self.limb_states(self.simulate(second, 2).final.x)
        return float(np.max(np.abs(a - b)))


def embedding_report(params: Optional[PolypedParams] = None, options: Optional[EmbedOptions] = None,
                     seed: int = 0) -> EmbeddingReport:
    """Body deviation per leg count, plus the limb spread for the first count."""
    params = params or PolypedParams()
    options = options or EmbedOptions()
    start = symmetric_gait(params.lls, EMBED_OPTIONS)
    rows, spread = [], None
    for legs in options.legs:
        variant = params if legs == params.n_legs else params.model_copy(
            update={"n_legs": legs, "hips": None, "targets": None})
        controller = PolypedEmbeddingController(PolypedModel.from_params(variant))
        rows.append(controller.compare_with_lls(options.steps, start))
        if spread is None:
            spread = controller.limb_spread(seed, start)
    return EmbeddingReport(rows=rows, limb_spread=spread)


def polyped_bundle(params: PolypedParams) -> ModelBundle:
    controller = PolypedEmbeddingController(PolypedModel.from_params(params))
    system = controller.closed_loop()
    start = symmetric_gait(params.lls, controller.opts)
    initial = controller.initialize(start, np.zeros(2))

    def stride(bundle, opts):
        guard = bundle.system.guard_named(f"{STANCE_A}_end")
        pre = execute(bundle.system, bundle.initial_state, Horizon(events=1), opts, stop_guard=guard).final
        return PoincareMapHandle(bundle.system, Section.from_guard(bundle.system, guard, pre.x, "stride"), opts,
                                 expected_sequence=(f"{STANCE_A}_end", f"{STANCE_B}_end"))

    return ModelBundle(
        name="polyped", params=params, system=system,
        sections={"stride": SectionRecipe("stride", stride, description="end of a stance_A step, pre-reset")},
        primary_section="stride",
        initial_state=initial,
        extras={"controller": controller},
    )
