"""
Exact and approximate reduction near a periodic orbit.

Exact reduction is certified by a sampled constant-rank test on iterates of
the return map and measured by fiber collapse residuals; approximate
reduction is measured by how fast deviations transverse to the range of
DP^n decay. The module also glues executions into single time-parameterized
paths and assigns asymptotic phase to states near a stable orbit.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DeviationUnderflow, HybridError, NotConverged
from .hybrid import ExecutionTrace, Horizon, HybridState, HybridSystem, execute
from .models import (
    AnalysisOptions, ContractionProfile, IntegratorOptions, PhaseReport, PhaseSample,
    ReductionReport, SpectralSummary, Verdict,
)
from .numerics import EPS, kernel_basis, numerical_rank
from .poincare import (
    RANK_ATOL, RANK_TOL, PeriodicOrbit, PoincareMapHandle, constant_rank_certificate,
    iterate_jacobian, spectral_summary,
)


logger = logging.getLogger("hybridred.reduction")

TWO_PI = 2.0 * np.pi
SAMPLES_PER_PERIOD = 1024
# phase mismatch accepted without searching along the flow
PHASE_MATCH_TOL = 1e-5


def analyze_reduction(
    handle: PoincareMapHandle,
    options: Optional[AnalysisOptions] = None,
    summary: Optional[SpectralSummary] = None,
    fiber_directions: Optional[Sequence[Sequence[float]]] = None,
    seed: int = 0,
    z=None,
) -> ReductionReport:
    """Classify the reduction available at the fixed point of `handle`.

    The handle is expected to be based at the fixed point, so the default
    evaluation point is the origin of section coordinates.
    """
    options = options or AnalysisOptions()
    center = np.zeros(handle.dim) if z is None else np.asarray(z, dtype=float)
    summary = summary or spectral_summary(handle, center)
    k = options.k or summary.nilpotent_index

    certificate = constant_rank_certificate(handle, center, options.radius, options.n_samples, k, seed)
    m_rank = summary.rank_at(summary.m)
    if certificate.passed and certificate.rank == summary.stabilized_rank:
        verdict, r = Verdict.EXACT_CERTIFIED, certificate.rank
    elif summary.spectral_radius < 1.0:
        verdict, r = Verdict.APPROXIMATE_ONLY, m_rank
    else:
        verdict, r = Verdict.INCONCLUSIVE, m_rank
    if certificate.passed and certificate.rank != summary.stabilized_rank:
        logger.warning(
            "certificate rank %s disagrees with stabilized rank %d", certificate.rank, summary.stabilized_rank,
        )

    residuals: List[float] = []
    if options.fiber_magnitude > 0:
        residuals = fiber_collapse_test(handle, center, fiber_directions, options.fiber_magnitude, k)

    contraction = None
    if options.perturbation > 0 and handle.dim > 0:
        direction = np.ones(handle.dim) / np.sqrt(handle.dim)
        contraction = contraction_profile(
            handle, center + options.perturbation * direction, options.cycles,
            z=center, jacobian=np.array(summary.jacobian),
        )

    report = ReductionReport(
        verdict=verdict, r=r, m=summary.m, subsystem_dimension=r + 1,
        rank_profile=summary.ranks, spectral_radius=summary.spectral_radius,
        certificate=certificate, fiber_residuals=residuals, contraction=contraction,
    )
    logger.info("reduction on %s: %s with r=%d", handle.section.name, report.verdict, r)
    return report


def fiber_collapse_test(
    handle: PoincareMapHandle,
    z=None,
    directions: Optional[Sequence[Sequence[float]]] = None,
    magnitude: float = 0.1,
    m: int = 1,
) -> List[float]:
    """Distances ||P^m(z + magnitude d) - P^m(z)|| for unit fiber directions d.

    Directions are given in section coordinates; by default they span the
    numerical kernel of DP^m at z.
    """
    center = np.zeros(handle.dim) if z is None else np.asarray(z, dtype=float)
    if directions is None:
        J, _ = iterate_jacobian(handle, center, m)
        directions = kernel_basis(J, RANK_TOL, RANK_ATOL).T
    image = handle.iterate(center, m)
    residuals = []
    for d in np.atleast_2d(np.asarray(directions, dtype=float)):
        if d.size == 0:
            continue
        d = d / np.linalg.norm(d)
        moved = handle.iterate(center + magnitude * d, m)
        residuals.append(float(np.linalg.norm(moved - image)))
    logger.debug("fiber collapse at magnitude %g: %s", magnitude, residuals)
    return residuals


def _ratios(values: List[float]) -> List[Optional[float]]:
    return [b / a if a > 0 else None for a, b in zip(values, values[1:])]


def contraction_profile(
    handle: PoincareMapHandle,
    x0,
    cycles: int = 6,
    z=None,
    jacobian: Optional[np.ndarray] = None,
    strict: bool = False,
) -> ContractionProfile:
    """Per-cycle deviation of P^k(x0) from the fixed point, split in two.

    The tangential part lies in the range of DP^n and the transverse part in
    its kernel; together they span the section. Deviations smaller than
    100 eps max(1, |xi|) end the profile.

    Raises:
        DeviationUnderflow: the deviation underflowed and `strict` is set.
    """
    if cycles < 3:
        raise ValueError("A contraction profile needs at least 3 cycles")
    center = np.zeros(handle.dim) if z is None else np.asarray(z, dtype=float)
    DP = handle.linearize(center) if jacobian is None else np.atleast_2d(jacobian)
    N = np.linalg.matrix_power(DP, handle.dim)
    r = numerical_rank(N, RANK_TOL, RANK_ATOL)
    U, _, Vt = np.linalg.svd(N)
    basis = np.hstack([U[:, :r], Vt[r:].T])

    floor = 100.0 * EPS * max(1.0, float(np.linalg.norm(handle.state(center).x)))
    tangential: List[float] = []
    transverse: List[float] = []
    truncated_at = None
    point = np.asarray(x0, dtype=float)
    for k in range(cycles + 1):
        deviation = point - center
        coefficients = np.linalg.solve(basis, deviation)
        tangential.append(float(np.linalg.norm(basis[:, :r] @ coefficients[:r])))
        transverse.append(float(np.linalg.norm(basis[:, r:] @ coefficients[r:])))
        if np.linalg.norm(deviation) <= floor:
            truncated_at = k
            if strict:
                raise DeviationUnderflow(
                    f"Deviation below {floor:.2e} at cycle {k}", {"cycle": k, "floor": floor},
                )
            logger.info("contraction profile truncated at cycle %d", k)
            break
        if k < cycles:
            point = handle.first_return(point)

    fitted = None
    positive = [(k, t) for k, t in enumerate(tangential) if t > floor]
    if len(positive) >= 2:
        ks, ts = zip(*positive)
        slope = np.polyfit(np.array(ks, dtype=float), np.log(ts), 1)[0]
        fitted = float(np.exp(slope))

    return ContractionProfile(
        cycles=cycles, tangential=tangential, transverse=transverse,
        tangential_ratios=_ratios(tangential), transverse_ratios=_ratios(transverse),
        fitted_rate=fitted, truncated_at=truncated_at,
    )


@dataclass(frozen=True)
class Stitch:
    """One glued event: the pre- and post-reset representatives of a point."""
    t: float
    pre: HybridState
    post: HybridState
    guard: str


@dataclass(frozen=True)
class GluedPath:
    """An execution read as one path in global time, with chart tags."""
    trace: ExecutionTrace
    stitches: Tuple[Stitch, ...]

    @property
    def duration(self) -> float:
        return self.trace.total_time

    def __call__(self, t: float) -> HybridState:
        return self.trace.state_at(t)

    def sample(self, n: int) -> Tuple[np.ndarray, List[HybridState]]:
        ts = np.linspace(0.0, self.duration, max(n, 2))
        return ts, [self(t) for t in ts]


def glued_trajectory(trace: ExecutionTrace) -> GluedPath:
    stitches = tuple(
        Stitch(e.t, e.pre, e.post, e.guard.name or str(e.guard.face_index)) for e in trace.events
    )
    return GluedPath(trace, stitches)


@dataclass(frozen=True)
class PhaseMap:
    """Reference orbit over one period and its sampled states per domain."""
    system: HybridSystem
    orbit: PeriodicOrbit
    period: float
    reference: ExecutionTrace
    samples: Dict[str, Tuple[np.ndarray, np.ndarray]]
    opts: IntegratorOptions
    spacing: float

    def time_of(self, theta: float) -> float:
        return (theta % TWO_PI) / TWO_PI * self.period

    def point(self, theta: float, left: bool = False) -> HybridState:
        """Orbit state at phase theta; `left` picks the pre-reset state at an event."""
        t = self.time_of(theta)
        if left:
            window = 1e-12 * max(1.0, self.period)
            for e in self.reference.events:
                if abs(e.t - t) <= window:
                    return e.pre
        return self.reference.state_at(t)

    def phase_at(self, t: float) -> float:
        return float(TWO_PI * (t % self.period) / self.period)


def build_phase_map(orbit: PeriodicOrbit, samples_per_period: int = SAMPLES_PER_PERIOD,
                    opts: Optional[IntegratorOptions] = None) -> PhaseMap:
    """Sample the orbit through its base point; the base point has phase 0."""
    system = orbit.handle.system
    opts = opts or orbit.handle.opts
    reference = execute(system, orbit.xi, Horizon(time=orbit.period), opts)
    grouped: Dict[str, Tuple[List[float], List[np.ndarray]]] = {}
    for t in np.linspace(0.0, orbit.period, samples_per_period, endpoint=False):
        state = reference.state_at(float(t))
        times, states = grouped.setdefault(state.domain_id, ([], []))
        times.append(float(t))
        states.append(state.x)
    samples = {d: (np.array(ts), np.array(xs)) for d, (ts, xs) in grouped.items()}
    return PhaseMap(system, orbit, orbit.period, reference, samples, opts, orbit.period / samples_per_period)


def _nearest_time(phase_map: PhaseMap, state: HybridState) -> Tuple[float, float]:
    try:
        times, states = phase_map.samples[state.domain_id]
    except KeyError:
        raise NotConverged(f"Reference orbit never visits domain {state.domain_id}") from None
    i = int(np.argmin(np.linalg.norm(states - state.x, axis=1)))
    t_i = float(times[i])
    segment = next(
        s for s in phase_map.reference.segments
        if s.domain_id == state.domain_id and s.t_start <= t_i <= s.t_end
    )
    window = phase_map.spacing
    lo = max(segment.t_start, t_i - window)
    hi = min(segment.t_end, t_i + window)
    if hi <= lo:
        return t_i, float(np.linalg.norm(segment(t_i) - state.x))
    result = minimize_scalar(
        lambda s: float(np.sum((segment(s) - state.x) ** 2)),
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-13},
    )
    return float(result.x), float(np.sqrt(result.fun))


def phase_of(system: HybridSystem, phase_map: PhaseMap, x: HybridState, settle_cycles: int = 10,
             tol: Optional[float] = None) -> float:
    """Asymptotic phase of x in [0, 2pi).

    Raises:
        NotConverged: x is still farther than `tol` from the orbit after settling.
    """
    period = phase_map.period
    settle = settle_cycles * period
    state = x
    if settle > 0:
        state = execute(system, x, Horizon(time=settle), phase_map.opts).final
    s, distance = _nearest_time(phase_map, state)
    tol = 1e-3 * max(1.0, float(np.linalg.norm(phase_map.orbit.xi.x))) if tol is None else tol
    if distance > tol:
        raise NotConverged(
            f"State is {distance:.2e} from the orbit after {settle_cycles} cycles",
            {"distance": distance, "settle_cycles": settle_cycles},
        )
    theta = float(np.mod(TWO_PI * (s - settle) / period, TWO_PI))
    return 0.0 if theta >= TWO_PI else theta


def _wrap(angle: float) -> float:
    return float((angle + np.pi) % TWO_PI - np.pi)


def isochron_sample(
    system: HybridSystem,
    phase_map: PhaseMap,
    theta: float,
    n_points: int = 8,
    radius: float = 0.05,
    seed: int = 0,
    directions: Optional[Sequence[Sequence[float]]] = None,
    settle_cycles: int = 10,
    left_limit: bool = False,
) -> List[HybridState]:
    """Points near the orbit sharing asymptotic phase theta.

    The first point is the orbit state at theta. Others start on random rays
    (transverse to the flow, or inside the span of `directions`) and are moved
    along the flow direction by bracketing until their phase matches.
    """
    anchor = phase_map.point(theta, left=left_limit)
    points = [anchor]
    domain = system.domain(anchor.domain_id)
    f = np.asarray(domain.field(anchor.x), dtype=float)
    f_hat = f / np.linalg.norm(f)
    rate = TWO_PI / (phase_map.period * np.linalg.norm(f))
    rng = np.random.default_rng(seed)
    basis = None if directions is None else np.atleast_2d(np.asarray(directions, dtype=float))

    def mismatch(q: np.ndarray) -> float:
        return _wrap(phase_of(system, phase_map, HybridState(anchor.domain_id, q), settle_cycles) - theta)

    attempts = 0
    while len(points) < n_points and attempts < 10 * n_points:
        attempts += 1
        if basis is None:
            u = rng.standard_normal(anchor.x.size)
            u -= (u @ f_hat) * f_hat
        else:
            u = basis.T @ rng.standard_normal(basis.shape[0])
        if np.linalg.norm(u) == 0:
            continue
        q0 = anchor.x + radius * rng.uniform(-1.0, 1.0) * u / np.linalg.norm(u)
        try:
            delta = mismatch(q0)
            if abs(delta) > PHASE_MATCH_TOL:
                q0 = _slide_to_phase(mismatch, q0, f_hat, delta, rate)
        except HybridError as e:
            logger.debug("isochron ray %d rejected: %s", attempts, e.message)
            continue
        if not domain.contains(q0, tol=1e-9):
            continue
        if np.linalg.norm(q0 - anchor.x) > radius:
            logger.debug("isochron ray %d left the radius %g after sliding", attempts, radius)
            continue
        points.append(HybridState(anchor.domain_id, q0))

    if len(points) < n_points:
        raise NotConverged(
            f"Placed {len(points)} of {n_points} isochron points", {"placed": len(points), "theta": theta},
        )
    return points


def _slide_to_phase(mismatch, q0: np.ndarray, f_hat: np.ndarray, delta: float, rate: float) -> np.ndarray:
    def along(beta):
        return mismatch(q0 + beta * f_hat)

    step = -delta / rate
    b = step
    value = along(b)
    for _ in range(6):
        if np.sign(value) != np.sign(delta):
            break
        b *= 2.0
        value = along(b)
    else:
        raise NotConverged("Could not bracket the isochron along the flow")
    beta = brentq(along, 0.0, b, xtol=1e-12)
    return q0 + beta * f_hat


def phase_analysis(orbit: PeriodicOrbit, options: Optional[AnalysisOptions] = None, seed: int = 0,
                   phase_map: Optional[PhaseMap] = None) -> PhaseReport:
    """Phases of orbit samples and, if requested, an isochron point cloud."""
    options = options or AnalysisOptions()
    phase_map = phase_map or build_phase_map(orbit)
    system = orbit.handle.system
    samples = []
    for i in range(options.phase_samples):
        t = i * phase_map.period / options.phase_samples
        state = phase_map.reference.state_at(t)
        theta = phase_of(system, phase_map, state, options.settle_cycles)
        samples.append(PhaseSample(domain_id=state.domain_id, x=[float(v) for v in state.x], theta=theta))

    isochron = []
    if options.isochron_theta is not None and options.isochron_points > 0:
        points = isochron_sample(
            system, phase_map, options.isochron_theta, options.isochron_points,
            options.isochron_radius, seed, settle_cycles=options.settle_cycles,
        )
        isochron = [
            PhaseSample(domain_id=p.domain_id, x=[float(v) for v in p.x], theta=options.isochron_theta)
            for p in points
        ]
    return PhaseReport(
        period=phase_map.period, samples=samples,
        isochron_theta=options.isochron_theta, isochron=isochron,
    )
