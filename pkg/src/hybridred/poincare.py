"""
Poincare sections, first-return maps and their linearizations.

Section coordinates are taken in a fixed orthonormal chart of the tangent
hyperplane at the base point; points off a nonlinear section are pulled back
onto it along the base-point normal, so the chart is an exact coordinate
system for the section near its base point.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .errors import (
    NoConvergence, NoEventBeforeTmax, NoReturn, SingularJacobian, WrongSequence,
)
from .hybrid import (
    ExecutionTrace, GuardFace, Horizon, HybridState, HybridSystem, SectionMonitor, execute,
)
from .models import CertificateReport, EigenPair, IntegratorOptions, SpectralSummary, SpectrumComparison
from .numerics import (
    LevelFunction, complex_pairs, eigen, fd_jacobian, gradient,
    newton_solve, numerical_rank, singular_values,
)


logger = logging.getLogger("hybridred.poincare")

RANK_TOL = 1e-8
# absolute floor so round-off-sized matrices count as rank zero
RANK_ATOL = 1e-10
FIXED_POINT_TOL = 1e-11
FIXED_POINT_ACCEPT = 1e-9


def tangent_chart(normal: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to `normal`.

    Starts from the coordinate axes minus the one most aligned with the
    normal, so axis-aligned normals give axis-aligned charts.
    """
    normal = np.asarray(normal, dtype=float)
    n = normal.size
    unit = normal / np.linalg.norm(normal)
    drop = int(np.argmax(np.abs(unit)))
    M = np.delete(np.eye(n), drop, axis=1)
    M = M - np.outer(unit, unit @ M)
    Q, R = np.linalg.qr(M)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


@dataclass(frozen=True)
class Section:
    """A codimension-one section in one domain with a chart at its base point."""
    name: str
    domain_id: str
    level: LevelFunction
    base: np.ndarray
    chart: np.ndarray
    normal: np.ndarray
    direction: int = 1
    guard: Optional[GuardFace] = None

    @property
    def kind(self) -> str:
        return "level" if self.guard is None else "guard"

    @property
    def dim(self) -> int:
        return self.chart.shape[1]

    @classmethod
    def at(cls, name: str, domain_id: str, level: LevelFunction, base, direction: int = 1,
           guard: Optional[GuardFace] = None) -> "Section":
        base = project_onto(level, np.asarray(base, dtype=float))
        normal = gradient(level, base)
        if not np.linalg.norm(normal) > 0:
            raise ValueError(f"Section {name} has a degenerate level function at its base point")
        normal = normal / np.linalg.norm(normal)
        return cls(name, domain_id, level, base, tangent_chart(normal), normal, direction, guard)

    @classmethod
    def from_guard(cls, system: HybridSystem, guard: Union[GuardFace, str], base, name: Optional[str] = None) -> "Section":
        if isinstance(guard, str):
            guard = system.guard_named(guard)
        level = system.domain(guard.domain_id).faces[guard.face_index]
        return cls.at(name or guard.name, guard.domain_id, level, base, -1, guard)

    def rebased(self, base) -> "Section":
        return Section.at(self.name, self.domain_id, self.level, base, self.direction, self.guard)

    def to_state(self, z) -> HybridState:
        z = np.asarray(z, dtype=float).reshape(-1)
        x = self.base + self.chart @ z
        return HybridState(self.domain_id, project_onto(self.level, x, self.normal))

    def coordinates(self, state: Union[HybridState, np.ndarray]) -> np.ndarray:
        x = state.x if isinstance(state, HybridState) else np.asarray(state, dtype=float)
        return self.chart.T @ (x - self.base)

    def monitor(self) -> SectionMonitor:
        return SectionMonitor(self.domain_id, self.level, self.direction)


def project_onto(level: LevelFunction, x: np.ndarray, direction: Optional[np.ndarray] = None,
                 max_iter: int = 8) -> np.ndarray:
    """Move x along `direction` (default: local gradient) onto level(x) = 0."""
    x = np.array(x, dtype=float)
    d = gradient(level, x) if direction is None else np.asarray(direction, dtype=float)
    scale = max(1.0, float(np.linalg.norm(x)))
    for _ in range(max_iter):
        value = level(x)
        if abs(value) <= 1e-15 * scale:
            break
        slope = float(gradient(level, x) @ d)
        if slope == 0.0:
            break
        x = x - (value / slope) * d
    return x


@dataclass(frozen=True)
class PoincareMapHandle:
    """First-return map of a section, in section coordinates."""
    system: HybridSystem
    section: Section
    opts: IntegratorOptions = IntegratorOptions()
    max_events: int = 32
    expected_sequence: Optional[Tuple[str, ...]] = None
    strict: bool = False
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def dim(self) -> int:
        return self.section.dim

    def state(self, z) -> HybridState:
        return self.section.to_state(z)

    def coordinates(self, state) -> np.ndarray:
        return self.section.coordinates(state)

    def execute_cycle(self, state: HybridState) -> ExecutionTrace:
        """Run from a section state until the next return, without converting coordinates."""
        section = self.section
        try:
            if section.guard is not None:
                trace = execute(self.system, state, Horizon(events=self.max_events + 1), self.opts,
                                stop_guard=section.guard)
            else:
                trace = execute(self.system, state, Horizon(events=self.max_events), self.opts,
                                stop_on=section.monitor())
        except NoEventBeforeTmax as e:
            raise NoReturn(f"No return to section {section.name}: {e.message}", e.details) from e
        if trace.stop_reason not in ("section", "guard"):
            raise NoReturn(
                f"No return to section {section.name} within {self.max_events} events",
                {"events": len(trace.events)},
            )
        self._check_sequence(trace)
        return trace

    def _check_sequence(self, trace: ExecutionTrace) -> None:
        if self.expected_sequence is None:
            return
        seen = tuple(e.guard.name for e in trace.events)
        if seen != tuple(self.expected_sequence):
            message = f"Unexpected guard sequence {seen}, expected {self.expected_sequence}"
            if self.strict:
                raise WrongSequence(message, {"sequence": list(seen)})
            logger.warning(message)

    def return_with_trace(self, z) -> Tuple[np.ndarray, ExecutionTrace]:
        trace = self.execute_cycle(self.state(z))
        x = trace.final.x
        if self.section.guard is None:
            x = self._flow_correction(x)
        return self.coordinates(x), trace

    def _flow_correction(self, x: np.ndarray) -> np.ndarray:
        field = self.system.domain(self.section.domain_id).field
        value = self.section.level(x)
        if value == 0.0:
            return x
        f = field(x)
        rate = float(gradient(self.section.level, x) @ f)
        return x - (value / rate) * f if rate != 0.0 else x

    def first_return(self, z) -> np.ndarray:
        return self.return_with_trace(z)[0]

    def iterate(self, z, k: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        for _ in range(k):
            z = self.first_return(z)
        return z

    def linearize(self, z=None) -> np.ndarray:
        z = np.zeros(self.dim) if z is None else np.asarray(z, dtype=float)
        if self.jacobian_fn is not None:
            return np.atleast_2d(self.jacobian_fn(z))
        return fd_jacobian(self.first_return, z)

    def rebased(self, z) -> "PoincareMapHandle":
        """Handle whose section is based at the point with coordinates z."""
        base = self.state(z).x
        jac = self.jacobian_fn
        if jac is not None:
            offset = np.asarray(z, dtype=float)
            old = self.section
            new_section = old.rebased(base)
            # both charts share the normal, so coordinate changes are orthogonal
            T = old.chart.T @ new_section.chart
            return replace(self, section=new_section,
                           jacobian_fn=lambda w: T.T @ jac(offset + T @ np.asarray(w)) @ T)
        return replace(self, section=self.section.rebased(base))


@dataclass(frozen=True)
class PeriodicOrbit:
    handle: PoincareMapHandle
    xi: HybridState
    period: float
    residual: float
    trace: ExecutionTrace


def find_periodic_orbit(handle: PoincareMapHandle, guess=None, tol: float = FIXED_POINT_TOL,
                        max_iter: int = 30) -> PeriodicOrbit:
    """Newton on P(z) - z; falls back to least squares for neutral families.

    Returns the orbit with a handle rebased at the fixed point.
    """
    z0 = np.zeros(handle.dim) if guess is None else np.asarray(guess, dtype=float)

    def residual(z):
        return handle.first_return(z) - z

    jac = None
    if handle.jacobian_fn is not None:
        jac = lambda z: handle.linearize(z) - np.eye(handle.dim)
    try:
        z = newton_solve(residual, z0, tol=tol, max_iter=max_iter, jacobian=jac)
    except SingularJacobian:
        logger.info("fixed-point Jacobian singular on %s; using least squares", handle.section.name)
        z = _least_squares_fixed_point(residual, z0, tol, max_iter, jac)
    except NoConvergence as e:
        z = _accept_or_raise(residual, e)

    rebased = handle.rebased(z)
    final, trace = rebased.return_with_trace(np.zeros(handle.dim))
    res = float(np.linalg.norm(final))
    if res > FIXED_POINT_ACCEPT:
        raise NoConvergence(f"Fixed point residual {res:.3e} above {FIXED_POINT_ACCEPT:g}", {"residual": res})
    observed = [e.guard.name for e in trace.events]
    if handle.expected_sequence is not None and tuple(observed) != tuple(handle.expected_sequence):
        raise NoConvergence(
            f"Fixed point cycle {tuple(observed)} does not match expected {tuple(handle.expected_sequence)}",
            {"observed": observed, "expected": list(handle.expected_sequence),
             "point": [float(v) for v in z], "residual": res},
        )
    orbit = PeriodicOrbit(rebased, rebased.section.to_state(np.zeros(handle.dim)), trace.total_time, res, trace)
    logger.info("periodic orbit on %s: period %.9g, residual %.2e", handle.section.name, orbit.period, res)
    return orbit


def _least_squares_fixed_point(residual, z0, tol, max_iter, jac):
    try:
        return newton_solve(residual, z0, tol=tol, max_iter=max_iter, jacobian=jac, least_squares=True, rcond=1e-7)
    except NoConvergence as e:
        return _accept_or_raise(residual, e)


def _accept_or_raise(residual, error: NoConvergence):
    if error.details.get("residual", np.inf) <= FIXED_POINT_ACCEPT:
        logger.info("accepting fixed point with residual %.2e", error.details["residual"])
        return np.array(error.details["point"])
    raise error


def _power_profile(DP: np.ndarray, K: int) -> Tuple[List[int], List[List[float]]]:
    ranks, svs = [], []
    M = np.eye(DP.shape[0])
    for _ in range(K):
        M = DP @ M
        ranks.append(numerical_rank(M, RANK_TOL, RANK_ATOL))
        svs.append([float(s) for s in singular_values(M)])
    return ranks, svs


def spectral_summary(handle: PoincareMapHandle, z=None, jacobian: Optional[np.ndarray] = None) -> SpectralSummary:
    """Eigenvalues of DP and ranks of DP^k, k = 1..max(m, dim)+1, at a fixed point."""
    DP = handle.linearize(z) if jacobian is None else np.atleast_2d(jacobian)
    m = handle.system.min_dim
    K = max(m, handle.dim) + 1
    ranks, svs = _power_profile(DP, K)
    nilpotent_index = next((k for k in range(1, K) if ranks[k - 1] == ranks[k]), K)
    spectrum = eigen(DP)

    anomalies = []
    if ranks[0] > m - 1:
        anomalies.append(f"rank DP = {ranks[0]} exceeds min domain dimension - 1 = {m - 1}")
    if any(b > a for a, b in zip(ranks, ranks[1:])):
        anomalies.append(f"rank profile {ranks} is not nonincreasing")
    stable = ranks[nilpotent_index - 1]
    if ranks[min(m, K) - 1] != stable and nilpotent_index <= m:
        anomalies.append(f"rank stabilized at {stable} but rank DP^m = {ranks[min(m, K) - 1]}")
    for a in anomalies:
        logger.warning("numerical anomaly on %s: %s", handle.section.name, a)

    return SpectralSummary(
        section_dimension=handle.dim,
        m=m,
        rank_bound=m - 1,
        eigenvalues=complex_pairs(spectrum.eigenvalues),
        singular_values=svs,
        ranks=ranks,
        nilpotent_index=nilpotent_index,
        spectral_radius=spectrum.spectral_radius,
        jacobian=DP.tolist(),
        anomalies=anomalies,
    )


def iterate_jacobian(handle: PoincareMapHandle, z, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Chain-rule Jacobians of P^k and P^(k+1) at z."""
    z = np.asarray(z, dtype=float)
    J = np.eye(handle.dim)
    for _ in range(k):
        J = handle.linearize(z) @ J
        z = handle.first_return(z)
    return J, handle.linearize(z) @ J


def iterate_jacobian_fd(handle: PoincareMapHandle, z, k: int) -> np.ndarray:
    """Finite-difference Jacobian of P^k, a cross-check for the chained product."""
    return fd_jacobian(lambda w: handle.iterate(w, k), np.asarray(z, dtype=float))


def sample_ball(rng: np.random.Generator, dim: int, radius: float, n: int) -> np.ndarray:
    """n points uniformly distributed in the radius ball of R^dim."""
    directions = rng.standard_normal((n, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, n) ** (1.0 / dim)
    return directions * radii[:, None]


def constant_rank_certificate(handle: PoincareMapHandle, z=None, radius: float = 0.05,
                              n_samples: int = 16, k: int = 1, seed: int = 0) -> CertificateReport:
    """Sampled check that rank DP^k is constant near the fixed point and stabilized at k."""
    center = np.zeros(handle.dim) if z is None else np.asarray(z, dtype=float)
    degenerate = radius == 0.0
    if degenerate:
        points = center[None, :]
    else:
        points = center + sample_ball(np.random.default_rng(seed), handle.dim, radius, n_samples)

    ranks, next_ranks = [], []
    for p in points:
        J, J_next = iterate_jacobian(handle, p, k)
        ranks.append(numerical_rank(J, RANK_TOL, RANK_ATOL))
        next_ranks.append(numerical_rank(J_next, RANK_TOL, RANK_ATOL))

    histogram = {}
    for r in ranks:
        histogram[str(r)] = histogram.get(str(r), 0) + 1
    constant = len(set(ranks)) == 1
    stabilized = ranks == next_ranks
    holds = constant and stabilized
    reasons = []
    if degenerate:
        reasons.append("zero radius: single-point certificate")
    if not constant:
        reasons.append("rank varies across samples")
    if not stabilized:
        reasons.append(f"rank not stabilized between k={k} and k={k + 1}")
    logger.debug("certificate on %s: k=%d histogram %s", handle.section.name, k, histogram)
    return CertificateReport(
        k=k, radius=radius, n_samples=len(points), ranks=ranks, next_ranks=next_ranks,
        histogram=histogram, rank=ranks[0] if constant else None, holds=holds,
        degenerate=degenerate, reason="; ".join(reasons),
    )


def nonzero_eigenvalues(DP: np.ndarray, tol: float = RANK_TOL) -> Tuple[np.ndarray, int]:
    spectrum = eigen(DP)
    smax = spectrum.singular_values[0] if spectrum.singular_values.size else 0.0
    mask = np.abs(spectrum.eigenvalues) > max(tol * smax, RANK_ATOL)
    return spectrum.eigenvalues[mask], int(np.sum(~mask))


def compare_sections(handle_a: PoincareMapHandle, handle_b: PoincareMapHandle,
                     tol: float = RANK_TOL) -> SpectrumComparison:
    """Pair the nonzero spectra of two sections through the same orbit by magnitude."""
    a, zeros_a = nonzero_eigenvalues(handle_a.linearize(), tol)
    b, zeros_b = nonzero_eigenvalues(handle_b.linearize(), tol)
    unused = list(b)
    pairs = []
    for value in a:
        if not unused:
            break
        j = int(np.argmin([abs(abs(value) - abs(w)) + abs(value - w) for w in unused]))
        match = unused.pop(j)
        pairs.append(EigenPair(a=(value.real, value.imag), b=(match.real, match.imag),
                               discrepancy=float(abs(value - match))))
    unmatched = abs(len(a) - len(b))
    max_discrepancy = max((p.discrepancy for p in pairs), default=0.0)
    return SpectrumComparison(
        nonzero_a=complex_pairs(a), nonzero_b=complex_pairs(b), pairs=pairs,
        max_discrepancy=max_discrepancy, zeros_a=zeros_a, zeros_b=zeros_b, unmatched=unmatched,
    )


def guard_handle_on_orbit(orbit: PeriodicOrbit, guard: Union[GuardFace, str], **kwargs) -> PoincareMapHandle:
    """Guard section through the pre-reset state of `guard` on a periodic orbit."""
    system = orbit.handle.system
    if isinstance(guard, str):
        guard = system.guard_named(guard)
    for event in orbit.trace.events:
        if event.guard.matches(guard):
            section = Section.from_guard(system, guard, event.pre.x)
            return PoincareMapHandle(system, section, orbit.handle.opts, orbit.handle.max_events, **kwargs)
    raise NoReturn(f"Orbit does not visit guard {guard.name}")


def level_handle_on_orbit(orbit: PeriodicOrbit, domain_id: str, level: LevelFunction, direction: int = 1,
                          name: str = "level", **kwargs) -> PoincareMapHandle:
    """Level section through the first crossing of level = 0 along a periodic orbit."""
    monitor = SectionMonitor(domain_id, level, direction)
    trace = execute(orbit.handle.system, orbit.xi, Horizon(events=orbit.handle.max_events),
                    orbit.handle.opts, stop_on=monitor)
    if trace.stop_reason != "section":
        raise NoReturn(f"Orbit does not cross section {name}")
    section = Section.at(name, domain_id, level, trace.final.x, direction)
    return PoincareMapHandle(orbit.handle.system, section, orbit.handle.opts, orbit.handle.max_events, **kwargs)
