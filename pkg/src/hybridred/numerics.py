"""
Numerical services: adaptive integration with dense output and event
location, finite-difference Jacobians, small dense decompositions and
Newton root finding.

Integration steps an embedded Runge-Kutta 5(4) pair (scipy RK45) one step
at a time and keeps each step's dense interpolant. Guard crossings are
bracketed on the step just taken and refined with brentq in the local step
coordinate, which keeps the located event time a smooth function of the
initial state.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import brentq

from .errors import (
    ConvergenceFailure, EvaluationFailure, HybridError, NoConvergence,
    NoEventBeforeTmax, SingularJacobian, StepFailure, TangentialCrossing,
)
from .models import IntegratorOptions


logger = logging.getLogger("hybridred.numerics")

VectorField = Callable[[np.ndarray], np.ndarray]
LevelFunction = Callable[[np.ndarray], float]

TRANSVERSALITY_FLOOR = 1e-6
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class DenseSegment:
    """Dense output of the flow of one domain's vector field."""
    domain_id: str
    t_start: float
    t_end: float
    x_start: np.ndarray
    x_end: np.ndarray
    solution: Optional[OdeSolution] = None

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def step_times(self) -> np.ndarray:
        if self.solution is None:
            return np.array([self.t_start, self.t_end])
        ts = np.array(self.solution.ts, dtype=float)
        return np.concatenate([ts[ts < self.t_end], [self.t_end]])

    def __call__(self, t: float) -> np.ndarray:
        if t <= self.t_start:
            return self.x_start.copy()
        if t >= self.t_end:
            return self.x_end.copy()
        return np.asarray(self.solution(t), dtype=float)

    def sample(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """n equally spaced times and the states at them, endpoints included."""
        ts = np.linspace(self.t_start, self.t_end, max(n, 2))
        return ts, np.array([self(t) for t in ts])


@dataclass(frozen=True)
class EventHit:
    t: float
    x: np.ndarray
    guard_id: int
    # other guards vanishing at the same point (corners)
    coincident: Tuple[int, ...] = ()


@dataclass(frozen=True)
class EventResult:
    t_hit: float
    x_hit: np.ndarray
    guard_id: int
    segment: DenseSegment


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    singular_values: np.ndarray

    @property
    def spectral_radius(self) -> float:
        if self.eigenvalues.size == 0:
            return 0.0
        return float(np.max(np.abs(self.eigenvalues)))


def _as_state(x) -> np.ndarray:
    return np.array(x, dtype=float).reshape(-1)


def gradient(g: LevelFunction, x: np.ndarray) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = _as_state(x)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = 1e-7 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (g(xp) - g(xm)) / (2.0 * h)
    return grad


def transversality(g: LevelFunction, field: VectorField, x: np.ndarray) -> Tuple[float, float]:
    """Directional derivative of g along the field and its cosine."""
    grad = gradient(g, x)
    f = np.asarray(field(x), dtype=float)
    rate = float(grad @ f)
    scale = np.linalg.norm(grad) * np.linalg.norm(f)
    cosine = abs(rate) / scale if scale > 0 else 0.0
    return rate, cosine


def check_transversal(g: LevelFunction, field: VectorField, x: np.ndarray, guard_id=None) -> float:
    rate, cosine = transversality(g, field, x)
    if cosine < TRANSVERSALITY_FLOOR:
        raise TangentialCrossing(
            f"Field is tangent to level set {guard_id} (cosine {cosine:.2e})",
            {"guard": guard_id, "point": [float(v) for v in x], "cosine": cosine},
        )
    return rate


def integrate(
    field: VectorField,
    x0,
    t_end: float,
    guards: Sequence[LevelFunction] = (),
    opts: Optional[IntegratorOptions] = None,
    domain_id: str = "",
    t0: float = 0.0,
    armed: Optional[Sequence[bool]] = None,
) -> Tuple[DenseSegment, Optional[EventHit]]:
    """Integrate until t_end or the first guard crossing, whichever is first.

    A guard is a crossing candidate once it has been strictly positive; a
    guard that starts at or below zero is ignored until it rises above zero.
    Guards with a False entry in `armed` wait for a positive value after the
    first step.
    """
    opts = opts or IntegratorOptions()
    x0 = _as_state(x0)
    if t_end <= t0:
        return DenseSegment(domain_id, t0, t0, x0, x0.copy()), None

    def rhs(t, y):
        return field(y)

    values = np.array([g(x0) for g in guards], dtype=float)
    mask = np.ones(len(guards), dtype=bool) if armed is None else np.asarray(armed, dtype=bool)
    armed = (values > 0) & mask

    solver = RK45(rhs, t0, x0, t_end, rtol=opts.rel_tol, atol=opts.abs_tol, max_step=opts.max_step)
    ts: List[float] = [t0]
    interpolants = []
    hit: Optional[EventHit] = None

    while solver.status == "running":
        t_old = solver.t
        message = solver.step()
        if solver.status == "failed":
            raise StepFailure(f"Integrator failed at t={t_old:.6g}: {message}", {"t": t_old, "domain": domain_id})
        if not np.all(np.isfinite(solver.y)):
            raise StepFailure(f"Non-finite state at t={solver.t:.6g}", {"t": solver.t, "domain": domain_id})
        interp = solver.dense_output()
        ts.append(solver.t)
        interpolants.append(interp)

        new_values = np.array([g(solver.y) for g in guards], dtype=float)
        crossing = armed & (new_values <= 0)
        if np.any(crossing):
            hit = _locate(guards, np.flatnonzero(crossing), interp, t_old, solver.t, opts)
            break
        armed |= new_values > 0

    solution = OdeSolution(np.array(ts), interpolants) if interpolants else None
    if hit is not None:
        segment = DenseSegment(domain_id, t0, hit.t, x0, hit.x, solution)
    else:
        segment = DenseSegment(domain_id, t0, float(ts[-1]), x0, _as_state(solver.y), solution)
    return segment, hit


def _root(phi, xtols: Sequence[float], guard_id: int, t_old: float, t_new: float) -> float:
    """Bracketed root in [0, 1]; tolerances are tried in order until one converges."""
    details = {"guard": guard_id, "t_old": t_old, "t_new": t_new}
    for xtol in xtols:
        try:
            s_root, info = brentq(phi, 0.0, 1.0, xtol=xtol, rtol=4 * EPS, full_output=True, disp=False)
        except (RuntimeError, ValueError) as e:
            raise TangentialCrossing(f"Event location on guard {guard_id} failed near a tangent crossing: {e}",
                                     details) from e
        if info.converged:
            return s_root
        logger.debug("event location on guard %d did not converge at xtol %.1e", guard_id, xtol)
    raise TangentialCrossing(f"Event location on guard {guard_id} did not converge; field tangent to the face",
                             details)


def _locate(guards, candidates, interp, t_old: float, t_new: float, opts: IntegratorOptions) -> EventHit:
    h = t_new - t_old
    # round-off first, event_tol as the fallback for flat crossings
    xtols = (4 * EPS, max(opts.event_tol / h, 4 * EPS))

    def state(s):
        return np.asarray(interp(t_old + s * h), dtype=float)

    roots = []
    for idx in candidates:
        g = guards[idx]

        def phi(s, g=g):
            return g(state(s))

        end = phi(1.0)
        if end == 0.0:
            s_root = 1.0
        else:
            s_root = _root(phi, xtols, int(idx), t_old, t_new)
        roots.append((s_root, int(idx)))
    roots.sort()
    s_hit, guard_id = roots[0]
    t_hit = t_old + s_hit * h
    if s_hit == 1.0:
        t_hit = t_new
    x_hit = state(s_hit) if s_hit < 1.0 else np.asarray(interp(t_new), dtype=float)
    coincident = tuple(i for s, i in roots[1:] if (s - s_hit) * h <= opts.event_tol)
    return EventHit(float(t_hit), x_hit, guard_id, coincident)


def integrate_to_event(
    field: VectorField,
    guards: Sequence[LevelFunction],
    x0,
    t_max: float,
    opts: Optional[IntegratorOptions] = None,
    domain_id: str = "",
) -> EventResult:
    """Integrate until one of the guard functions crosses from positive to zero.

    Raises:
        NoEventBeforeTmax: no guard crossed within t_max.
        TangentialCrossing: the field is tangent to the triggered level set.
        StepFailure: the integrator cannot meet its tolerance.
    """
    segment, hit = integrate(field, x0, t_max, guards, opts, domain_id)
    if hit is None:
        raise NoEventBeforeTmax(f"No guard crossing before t={t_max:g}", {"t_max": t_max})
    check_transversal(guards[hit.guard_id], field, hit.x, hit.guard_id)
    logger.debug("event: guard %d at t=%.12g", hit.guard_id, hit.t)
    return EventResult(hit.t, hit.x, hit.guard_id, segment)


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x, step: Optional[Sequence[float]] = None) -> np.ndarray:
    """Central-difference Jacobian; default step max(1e-6, 1e-6|x_i|) per coordinate."""
    x = _as_state(x)
    if step is None:
        steps = np.maximum(1e-6, 1e-6 * np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=float), x.shape)

    columns = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += steps[i]
        xm[i] -= steps[i]
        fp = _evaluate(fn, xp)
        fm = _evaluate(fn, xm)
        columns.append((fp - fm) / (2.0 * steps[i]))
    if not columns:
        out = _evaluate(fn, x)
        return np.zeros((out.size, 0))
    return np.column_stack(columns)


def _evaluate(fn, point: np.ndarray) -> np.ndarray:
    try:
        return np.atleast_1d(np.asarray(fn(point), dtype=float))
    except EvaluationFailure:
        raise
    except Exception as e:
        code = e.code if isinstance(e, HybridError) else None
        raise EvaluationFailure(f"Map evaluation failed at stencil point: {e}", point, code) from e


def numerical_rank(M, tol: float = 1e-8, atol: float = 0.0) -> int:
    """Number of singular values above max(tol * sigma_max, atol)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > max(tol * s[0], atol)))


def singular_values(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def sort_eigenvalues(values) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    order = sorted(range(values.size), key=lambda i: (-abs(values[i]), -values[i].real, -values[i].imag))
    return values[order]


def eigen(M) -> Spectrum:
    """Eigenvalues sorted by descending magnitude, then real part, then imaginary part."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"eigen needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConvergenceFailure("Matrix has non-finite entries")
    try:
        values = np.linalg.eigvals(M) if M.size else np.zeros(0, dtype=complex)
        sv = singular_values(M)
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"Eigen decomposition did not converge: {e}") from e
    return Spectrum(sort_eigenvalues(values), sv)


def complex_pairs(values) -> List[Tuple[float, float]]:
    return [(float(np.real(v)), float(np.imag(v))) for v in np.asarray(values, dtype=complex)]


def newton_solve(
    f: Callable[[np.ndarray], np.ndarray],
    x0,
    tol: float = 1e-12,
    max_iter: int = 50,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    least_squares: bool = False,
    rcond: float = 1e-9,
    full_output: bool = False,
):
    """Damped Newton iteration for f(x) = 0.

    Square systems use a direct solve; non-square systems, or any system with
    least_squares set, use the minimum-norm least-squares step.

    Raises:
        SingularJacobian: square Jacobian is numerically singular.
        NoConvergence: residual above tol after max_iter iterations.
    """
    x = _as_state(x0)
    r = np.atleast_1d(np.asarray(f(x), dtype=float))
    history = [float(np.linalg.norm(r))]
    jac = jacobian or (lambda z: fd_jacobian(f, z))

    for iteration in range(max_iter + 1):
        if history[-1] <= tol:
            logger.debug("newton converged in %d iterations, residual %.3e", iteration, history[-1])
            if full_output:
                return x, {"iterations": iteration, "residual": history[-1], "history": history}
            return x
        if iteration == max_iter:
            break

        J = np.atleast_2d(jac(x))
        square = J.shape[0] == J.shape[1]
        if square and not least_squares:
            if numerical_rank(J, tol=1e-12) < J.shape[0]:
                raise SingularJacobian(
                    f"Singular Jacobian at iteration {iteration}",
                    {"point": [float(v) for v in x], "rank": numerical_rank(J, tol=1e-12)},
                )
            dx = np.linalg.solve(J, -r)
        else:
            dx = np.linalg.lstsq(J, -r, rcond=rcond)[0]

        scale = 1.0
        while True:
            candidate = x + scale * dx
            try:
                r_new = np.atleast_1d(np.asarray(f(candidate), dtype=float))
                accepted = np.linalg.norm(r_new) < history[-1] or scale < 1.0 / 64
            except HybridError:
                if scale < 1.0 / 64:
                    raise
                accepted = False
            if accepted:
                break
            scale *= 0.5
        x, r = candidate, r_new
        history.append(float(np.linalg.norm(r)))
        logger.debug("newton iteration %d: residual %.3e (damping %g)", iteration + 1, history[-1], scale)

    raise NoConvergence(
        f"Newton did not converge in {max_iter} iterations (residual {history[-1]:.3e})",
        {"residual": history[-1], "iterations": max_iter, "point": [float(v) for v in x]},
    )


def orthonormal_basis(M, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the column space of M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > tol * max(1.0, s[0])]


def kernel_basis(M, tol: float = 1e-8, atol: float = 0.0) -> np.ndarray:
    """Orthonormal basis of the numerical kernel of M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if M.size == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M)
    rank = numerical_rank(M, tol, atol)
    return Vt[rank:].T.reshape(n, n - rank)
