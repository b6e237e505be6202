"""
Hybrid system data model and execution engine.

A hybrid system is a collection of domains (coordinate patches of R^n whose
interior is {h_i > 0} for the domain's face functions), a vector field per
domain, and guard faces that carry a reset into a target domain. Executions
are right-continuous: at an event the pre-reset state is recorded and the
post-reset state starts the next segment.
"""

import logging
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import SCHEMA_VERSION, ConfigError, EscapeDomain, NoEventBeforeTmax, ZenoSuspicion
from .models import (
    IntegratorOptions, SystemDocument, ValidationFinding, ValidationReport,
)
from .numerics import (
    DenseSegment, LevelFunction, VectorField, check_transversal, integrate, transversality,
)


logger = logging.getLogger("hybridred.hybrid")

# |h| below this (times max(1, |x|)) counts as lying on a face
FACE_TOL = 1e-9


@dataclass(frozen=True)
class Domain:
    id: str
    dim: int
    field: VectorField
    faces: Tuple[LevelFunction, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"Domain {self.id} must have dimension >= 1")
        object.__setattr__(self, "faces", tuple(self.faces))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return all(h(x) >= -tol for h in self.faces)


@dataclass(frozen=True)
class GuardFace:
    domain_id: str
    face_index: int
    reset: Callable[[np.ndarray], np.ndarray]
    target: str
    predicate: Optional[Callable[[np.ndarray], bool]] = None
    name: str = ""

    def active(self, x: np.ndarray) -> bool:
        return self.predicate is None or bool(self.predicate(x))

    def matches(self, other: "GuardFace") -> bool:
        return self.domain_id == other.domain_id and self.face_index == other.face_index


@dataclass(frozen=True)
class HybridSystem:
    name: str
    domains: Mapping[str, Domain]
    guards: Tuple[GuardFace, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "guards", tuple(self.guards))
        for g in self.guards:
            if g.domain_id not in self.domains or g.target not in self.domains:
                raise ValueError(f"Guard {g.name or g.face_index} references an unknown domain")
            if not 0 <= g.face_index < len(self.domains[g.domain_id].faces):
                raise ValueError(f"Guard face index {g.face_index} out of range in domain {g.domain_id}")

    def domain(self, domain_id: str) -> Domain:
        try:
            return self.domains[domain_id]
        except KeyError:
            raise KeyError(f"Unknown domain: {domain_id}") from None

    def guard_for(self, domain_id: str, face_index: int) -> Optional[GuardFace]:
        for g in self.guards:
            if g.domain_id == domain_id and g.face_index == face_index:
                return g
        return None

    def guard_named(self, name: str) -> GuardFace:
        for g in self.guards:
            if g.name == name:
                return g
        raise KeyError(f"Unknown guard: {name}")

    @property
    def min_dim(self) -> int:
        return min(d.dim for d in self.domains.values())


@dataclass(frozen=True)
class HybridState:
    domain_id: str
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=float).reshape(-1))

    def to_dict(self) -> Dict[str, Any]:
        return {"domain": self.domain_id, "x": [float(v) for v in self.x]}


@dataclass(frozen=True)
class Event:
    t: float
    pre: HybridState
    post: HybridState
    guard: GuardFace


@dataclass(frozen=True)
class Horizon:
    """Execution budget: stop at a time, after a number of events, or both."""
    time: Optional[float] = None
    events: Optional[int] = None


@dataclass(frozen=True)
class SectionMonitor:
    """Stops an execution when level(x) crosses zero in the given direction."""
    domain_id: str
    level: LevelFunction
    direction: int = 1

    def monitored(self, x: np.ndarray) -> float:
        return -self.direction * self.level(x)


class Incomparable(Enum):
    INCOMPARABLE = "incomparable"


INCOMPARABLE = Incomparable.INCOMPARABLE


@dataclass
class ExecutionTrace:
    segments: List[DenseSegment] = dc_field(default_factory=list)
    events: List[Event] = dc_field(default_factory=list)
    total_time: float = 0.0
    final: Optional[HybridState] = None
    stop_reason: str = "horizon"

    @property
    def event_times(self) -> List[float]:
        return [e.t for e in self.events]

    def state_at(self, t: float) -> HybridState:
        """Right-continuous evaluation of the execution at time t."""
        if t >= self.total_time or not self.segments:
            return self.final
        for seg in self.segments:
            if seg.t_start <= t < seg.t_end:
                return HybridState(seg.domain_id, seg(t))
        return self.final

    def to_dataframe(self) -> pd.DataFrame:
        """One row per integration step plus one flagged row per event post-state."""
        width = max([s.x_start.size for s in self.segments] + [e.post.x.size for e in self.events] + [0])
        columns = ["t", "domain_id"] + [f"x_{i + 1}" for i in range(width)] + ["event_flag"]
        rows = []
        pending = list(self.events)
        for seg in self.segments:
            while pending and pending[0].t <= seg.t_start:
                ev = pending.pop(0)
                rows.append(_row(ev.t, ev.post, width, 1))
            for t in seg.step_times:
                rows.append(_row(float(t), HybridState(seg.domain_id, seg(t)), width, 0))
        for ev in pending:
            rows.append(_row(ev.t, ev.post, width, 1))
        return pd.DataFrame(rows, columns=columns)

    def to_csv(self, path: Union[str, Path]) -> None:
        frame = self.to_dataframe()
        with open(path, "w", newline="") as handle:
            handle.write(f"# schema_version: {SCHEMA_VERSION}\n")
            frame.to_csv(handle, index=False)


def _row(t: float, state: HybridState, width: int, flag: int) -> list:
    values = list(state.x) + [np.nan] * (width - state.x.size)
    return [t, state.domain_id] + values + [flag]


def _on_active_guard(system: HybridSystem, state: HybridState) -> Optional[GuardFace]:
    domain = system.domain(state.domain_id)
    tol = FACE_TOL * max(1.0, float(np.linalg.norm(state.x)))
    for g in system.guards:
        if g.domain_id != state.domain_id:
            continue
        h = domain.faces[g.face_index]
        if abs(h(state.x)) <= tol and g.active(state.x):
            rate, _ = transversality(h, domain.field, state.x)
            if rate < 0:
                return g
    return None


def _apply_reset(guard: GuardFace, t: float, pre: HybridState) -> Event:
    post = HybridState(guard.target, guard.reset(pre.x))
    logger.debug("event %s at t=%.12g: %s -> %s", guard.name or guard.face_index, t, pre.domain_id, post.domain_id)
    return Event(t, pre, post, guard)


def execute(
    system: HybridSystem,
    x0: HybridState,
    horizon: Union[float, Horizon],
    opts: Optional[IntegratorOptions] = None,
    stop_on: Optional[SectionMonitor] = None,
    stop_guard: Optional[GuardFace] = None,
) -> ExecutionTrace:
    """Execute the hybrid system from x0.

    The run ends at the horizon time, after the horizon's event budget, when
    `stop_on` is crossed, or when `stop_guard` is reached (before its reset).
    A state lying on an enabled guard with outward field is reset immediately.

    Raises:
        EscapeDomain: the state leaves through a face with no enabled guard.
        ZenoSuspicion: too many events inside one event window.
        TangentialCrossing: the field is tangent to a crossed face.
        NoEventBeforeTmax: an event-budget run found no event within t_max.
    """
    opts = opts or IntegratorOptions()
    if not isinstance(horizon, Horizon):
        horizon = Horizon(time=float(horizon))
    t_limit = horizon.time
    zeno_window = opts.event_tol * max(1.0, t_limit or 1.0)

    trace = ExecutionTrace(final=x0)
    state = x0
    t = 0.0
    if t_limit is not None and t_limit <= 0.0:
        return trace
    if horizon.events is not None and horizon.events <= 0:
        trace.stop_reason = "events"
        return trace

    def record(event: Event):
        trace.events.append(event)
        recent = [e for e in trace.events if event.t - e.t <= zeno_window]
        if len(recent) > opts.max_events_per_step:
            raise ZenoSuspicion(
                f"{len(recent)} events within {zeno_window:.2e} time units near t={event.t:.6g}",
                {"t": event.t, "events": len(recent)},
            )

    first = True
    while True:
        if horizon.events is not None and len(trace.events) >= horizon.events:
            trace.stop_reason = "events"
            break

        immediate = _on_active_guard(system, state)
        if immediate is not None:
            if stop_guard is not None and immediate.matches(stop_guard) and not first:
                trace.stop_reason = "guard"
                break
            event = _apply_reset(immediate, t, state)
            record(event)
            state = event.post
            first = False
            continue
        first = False

        domain = system.domain(state.domain_id)
        fns = list(domain.faces)
        armed = [True] * len(fns)
        monitor_index = None
        if stop_on is not None and stop_on.domain_id == domain.id:
            monitor_index = len(fns)
            fns.append(stop_on.monitored)
            armed.append(False)

        t_end = t_limit if t_limit is not None else t + opts.t_max
        segment, hit = integrate(domain.field, state.x, t_end, fns, opts, domain.id, t0=t, armed=armed)
        trace.segments.append(segment)
        t = segment.t_end

        if hit is None:
            if t_limit is None:
                raise NoEventBeforeTmax(
                    f"No event within {opts.t_max:g} time units in domain {domain.id}",
                    {"domain": domain.id, "t": t},
                )
            state = HybridState(domain.id, segment.x_end)
            trace.stop_reason = "horizon"
            break

        pre = HybridState(domain.id, hit.x)
        if hit.guard_id == monitor_index:
            check_transversal(stop_on.monitored, domain.field, hit.x, "section")
            state = pre
            trace.stop_reason = "section"
            break

        face = _resolve_face(system, domain, hit, monitor_index)
        guard = system.guard_for(domain.id, face)
        check_transversal(domain.faces[face], domain.field, hit.x, face)
        if stop_guard is not None and guard.matches(stop_guard):
            state = pre
            trace.stop_reason = "guard"
            break
        event = _apply_reset(guard, t, pre)
        record(event)
        state = event.post

    trace.total_time = t
    trace.final = state
    return trace


def _resolve_face(system: HybridSystem, domain: Domain, hit, monitor_index) -> int:
    faces = [hit.guard_id] + [i for i in hit.coincident if i != monitor_index]
    enabled = []
    for i in faces:
        g = system.guard_for(domain.id, i)
        if g is not None and g.active(hit.x):
            enabled.append(i)
    if len(enabled) == 1:
        if len(faces) > 1:
            logger.debug("corner at t=%.12g resolved to face %d", hit.t, enabled[0])
        return enabled[0]
    if len(faces) > 1:
        raise EscapeDomain(
            f"Corner of faces {faces} in domain {domain.id} at t={hit.t:.6g}",
            {"domain": domain.id, "faces": faces, "point": [float(v) for v in hit.x]},
        )
    raise EscapeDomain(
        f"State left domain {domain.id} through face {hit.guard_id} with no enabled guard",
        {"domain": domain.id, "face": hit.guard_id, "point": [float(v) for v in hit.x], "t": hit.t},
    )


def in_domain_distance(a: HybridState, b: HybridState) -> Union[float, Incomparable]:
    """Euclidean in-chart distance, or INCOMPARABLE across domains."""
    if a.domain_id != b.domain_id or a.x.size != b.x.size:
        return INCOMPARABLE
    return float(np.linalg.norm(a.x - b.x))


def validate(system: HybridSystem, samples: Sequence[HybridState], face_tol: float = 1e-6) -> ValidationReport:
    """Check outward-pointing guards, reset targets and dimensions at sample states."""
    findings: List[ValidationFinding] = []
    for s in samples:
        domain = system.domain(s.domain_id)
        point = [float(v) for v in s.x]
        if s.x.size != domain.dim:
            findings.append(ValidationFinding(
                kind="dimension_mismatch", domain_id=domain.id,
                detail=f"state has {s.x.size} coordinates, domain has {domain.dim}", point=point,
            ))
            continue
        if not np.all(np.isfinite(domain.field(s.x))):
            findings.append(ValidationFinding(
                kind="non_finite_field", domain_id=domain.id, detail="field not finite", point=point,
            ))
            continue
        for guard in system.guards:
            if guard.domain_id != domain.id:
                continue
            h = domain.faces[guard.face_index]
            if abs(h(s.x)) > face_tol or not guard.active(s.x):
                continue
            rate, _ = transversality(h, domain.field, s.x)
            if rate >= 0:
                findings.append(ValidationFinding(
                    kind="not_outward", domain_id=domain.id, face_index=guard.face_index,
                    detail=f"directional derivative {rate:.3g} >= 0", point=point,
                ))
            post = np.asarray(guard.reset(s.x), dtype=float)
            target = system.domain(guard.target)
            if post.size != target.dim:
                findings.append(ValidationFinding(
                    kind="dimension_mismatch", domain_id=domain.id, face_index=guard.face_index,
                    detail=f"reset gives {post.size} coordinates, target {target.id} has {target.dim}", point=point,
                ))
            elif not target.contains(post, tol=face_tol):
                findings.append(ValidationFinding(
                    kind="reset_outside_target", domain_id=domain.id, face_index=guard.face_index,
                    detail=f"reset lands outside {target.id}", point=point,
                ))
    report = ValidationReport(samples_checked=len(samples), findings=findings)
    if findings:
        logger.warning("validation of %s found %d problems", system.name, len(findings))
    return report


def augment_with_time(system: HybridSystem) -> HybridSystem:
    """Prepend time as a coordinate with unit rate; resets carry time through."""
    def lift_field(f):
        return lambda x: np.concatenate([[1.0], f(x[1:])])

    def lift_face(h):
        return lambda x: h(x[1:])

    def lift_reset(r):
        return lambda x: np.concatenate([[x[0]], r(x[1:])])

    def lift_predicate(p):
        return None if p is None else (lambda x: p(x[1:]))

    domains = {
        d.id: Domain(d.id, d.dim + 1, lift_field(d.field), tuple(lift_face(h) for h in d.faces))
        for d in system.domains.values()
    }
    guards = tuple(
        GuardFace(g.domain_id, g.face_index, lift_reset(g.reset), g.target, lift_predicate(g.predicate), g.name)
        for g in system.guards
    )
    return HybridSystem(f"{system.name}+time", domains, guards)


# Builtins for JSON system documents

def _matrix(params, key):
    try:
        return np.array(params[key], dtype=float)
    except KeyError:
        raise ConfigError(f"Missing parameter '{key}'") from None


def _linear_field(params, dim):
    A = np.atleast_2d(_matrix(params, "A"))
    b = np.array(params.get("b", np.zeros(dim)), dtype=float)
    if A.shape != (dim, dim) or b.shape != (dim,):
        raise ConfigError(f"Linear field needs a {dim}x{dim} matrix")
    return lambda x: A @ x + b


def _constant_field(params, dim):
    c = np.array(params.get("c", np.zeros(dim)), dtype=float)
    if c.shape != (dim,):
        raise ConfigError(f"Constant field needs {dim} components")
    return lambda x: c.copy()


def _rotation_field(params, dim):
    if dim != 2:
        raise ConfigError("Rotation field is planar")
    omega = float(params.get("omega", 1.0))
    return lambda x: np.array([-omega * x[1], omega * x[0]])


def _coordinate_face(params, dim):
    i = int(params.get("index", 0))
    offset = float(params.get("offset", 0.0))
    sign = float(params.get("sign", 1.0))
    if not 0 <= i < dim:
        raise ConfigError(f"Face coordinate {i} out of range")
    return lambda x: sign * (x[i] - offset)


def _affine_face(params, dim):
    a = np.array(params.get("a", np.zeros(dim)), dtype=float)
    b = float(params.get("b", 0.0))
    return lambda x: float(a @ x + b)


def _identity_reset(params, dim):
    return lambda x: np.array(x, dtype=float)


def _affine_reset(params, dim):
    R = np.atleast_2d(_matrix(params, "matrix"))
    c = np.array(params.get("offset", np.zeros(R.shape[0])), dtype=float)
    if R.shape[1] != dim:
        raise ConfigError(f"Reset matrix needs {dim} columns")
    return lambda x: R @ x + c


def _projection_reset(params, dim):
    idx = [int(i) for i in params.get("indices", [])]
    return lambda x: np.array([x[i] for i in idx], dtype=float)


def _coordinate_predicate(params, dim):
    i = int(params.get("index", 0))
    sign = float(params.get("sign", 1.0))
    threshold = float(params.get("threshold", 0.0))
    return lambda x: sign * (x[i] - threshold) > 0


FIELD_BUILTINS: Dict[str, Callable] = {
    "linear": _linear_field,
    "constant": _constant_field,
    "rotation": _rotation_field,
}
FACE_BUILTINS: Dict[str, Callable] = {
    "coordinate": _coordinate_face,
    "affine": _affine_face,
}
RESET_BUILTINS: Dict[str, Callable] = {
    "identity": _identity_reset,
    "affine": _affine_reset,
    "projection": _projection_reset,
}
PREDICATE_BUILTINS: Dict[str, Callable] = {
    "coordinate": _coordinate_predicate,
}


def _build(registry: Dict[str, Callable], spec, dim: int, what: str):
    try:
        maker = registry[spec.kind]
    except KeyError:
        raise ConfigError(f"Unknown {what} builtin: {spec.kind}", {"known": sorted(registry)}) from None
    return maker(spec.params, dim)


def system_from_document(doc: SystemDocument) -> HybridSystem:
    """Build a HybridSystem from a validated JSON system document."""
    domains = {}
    for d in doc.domains:
        domains[d.id] = Domain(
            d.id, d.dim,
            _build(FIELD_BUILTINS, d.field, d.dim, "field"),
            tuple(_build(FACE_BUILTINS, f, d.dim, "face") for f in d.faces),
        )
    guards = []
    for g in doc.guards:
        dim = domains[g.domain].dim
        predicate = _build(PREDICATE_BUILTINS, g.predicate, dim, "predicate") if g.predicate else None
        guards.append(GuardFace(
            g.domain, g.face, _build(RESET_BUILTINS, g.reset, dim, "reset"), g.target, predicate,
            name=f"{g.domain}:{g.face}",
        ))
    try:
        return HybridSystem(doc.name, domains, tuple(guards))
    except ValueError as e:
        raise ConfigError(str(e)) from e
