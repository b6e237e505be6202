"""
Command-line interface.

    hybridred simulate --config run.yaml
    hybridred analyze poincare|reduce|phase --config run.yaml [--plot]
    hybridred control deadbeat|embed --config run.yaml
    hybridred models list
    hybridred check golden.json report.json [--profile tolerances.yaml]

Reports go to the output directory as JSON (and CSV tables); errors are
printed to stderr as JSON and mapped onto exit codes 2 (configuration),
3 (numerical failure) and 4 (model assumption violated).
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from .comparer import check_report
from .control import control_analysis, embedding_report
from .errors import SCHEMA_VERSION, ConfigError, HybridError
from .factory import SystemFactory, resolve_section
from .hybrid import ExecutionTrace, Horizon, HybridState, execute
from .models import EventLog, EventRecord, OrbitReport, Report, RunConfig
from .poincare import find_periodic_orbit, spectral_summary
from .reduction import analyze_reduction, phase_analysis
from .systems import ModelBundle, get_model, list_models


logger = logging.getLogger("hybridred.cli")

CHECK_FAILED = 1


def _common(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument("--config", type=str, help="Run configuration (YAML or JSON)")
    parser.add_argument("--out", type=str, help="Output directory (overrides the configuration)")
    parser.add_argument("--plot", action="store_true", help="Also write SVG figures")
    parser.add_argument("--seed", type=int, help="Sampling seed (overrides the configuration)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Log to stderr (-vv for debug)")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridred", description=__doc__.split("\n\n")[0].strip())
    verbs = parser.add_subparsers(dest="verb", required=True)

    _common(verbs.add_parser("simulate", help="Execute the configured model and write the trace"))

    analyze = verbs.add_parser("analyze", help="Return-map analysis at a periodic orbit")
    kinds = analyze.add_subparsers(dest="kind", required=True)
    for kind, text in (("poincare", "fixed point and multipliers"), ("reduce", "exact/approximate reduction"),
                       ("phase", "asymptotic phase and isochrons")):
        _common(kinds.add_parser(kind, help=text))

    control = verbs.add_parser("control", help="Deadbeat synthesis and the polyped embedding")
    kinds = control.add_subparsers(dest="kind", required=True)
    _common(kinds.add_parser("deadbeat", help="deadbeat law residuals and closed-loop spectrum"))
    _common(kinds.add_parser("embed", help="polyped body versus leg-spring body"))

    models = verbs.add_parser("models", help="Registered models")
    kinds = models.add_subparsers(dest="kind", required=True)
    kinds.add_parser("list", help="names, descriptions and parameter schemas")

    check = _common(verbs.add_parser("check", help="Compare a report with a golden report"))
    check.add_argument("golden", type=str)
    check.add_argument("report", type=str)
    check.add_argument("--profile", type=str, help="Tolerance profile (YAML or JSON)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    verbose = getattr(args, "verbose", 0)
    if verbose:
        logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except HybridError as e:
        return _fail(e)
    except (FileNotFoundError, ValueError) as e:
        return _fail(ConfigError(str(e)))


def _fail(error: HybridError) -> int:
    logger.debug("command failed", exc_info=error)
    print(json.dumps(error.to_dict(), sort_keys=True), file=sys.stderr)
    return error.exit_code


def _dispatch(args) -> int:
    if args.verb == "models":
        print(json.dumps({"schema_version": SCHEMA_VERSION, "models": list_models()}, indent=2, sort_keys=True))
        return 0
    if args.verb == "check":
        result = check_report(args.golden, args.report, args.profile)
        print(result.format_table())
        return 0 if result.passed else CHECK_FAILED

    config = _load(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.verb == "simulate":
        cmd_simulate(config, out, args.plot)
    elif args.verb == "analyze":
        cmd_analyze(config, args.kind, out, args.plot)
    else:
        cmd_control(config, args.kind, out, args.plot)
    return 0


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigError("This command needs --config")
    config = SystemFactory.load_config(args.config)
    update = {}
    if args.out:
        update["output_dir"] = args.out
    if args.seed is not None:
        update["seed"] = args.seed
    return config.model_copy(update=update) if update else config


def _write(report: Report, path: Path) -> Path:
    with open(path, "w") as f:
        f.write(report.to_json())
        f.write("\n")
    return path


def _write_table(frame: pd.DataFrame, path: Path) -> Path:
    with open(path, "w", newline="") as f:
        f.write(f"# schema_version: {SCHEMA_VERSION}\n")
        frame.to_csv(f, index=False)
    return path


def _horizon(config: RunConfig, bundle: ModelBundle) -> Horizon:
    spec = config.horizon
    if spec.cycles is not None:
        handle = bundle.handle(config.section.name if config.section else None, config.integrator)
        if handle.expected_sequence:
            return Horizon(events=spec.cycles * len(handle.expected_sequence))
        if "period" in bundle.extras:
            return Horizon(time=spec.cycles * bundle.extras["period"])
        raise ConfigError(f"Model {bundle.name} has no nominal cycle; give a time or event horizon")
    if spec.time is None and spec.events is None:
        raise ConfigError("Horizon needs a time, an event count or a cycle count")
    return Horizon(time=spec.time, events=spec.events)


def event_log(trace: ExecutionTrace) -> EventLog:
    return EventLog(
        events=[EventRecord(t=e.t, guard=e.guard.name, pre_domain=e.pre.domain_id, pre=list(map(float, e.pre.x)),
                            post_domain=e.post.domain_id, post=list(map(float, e.post.x)))
                for e in trace.events],
        total_time=trace.total_time, stop_reason=trace.stop_reason,
    )


def cmd_simulate(config: RunConfig, out: Path, plot: bool = False) -> ExecutionTrace:
    bundle = SystemFactory.create(config)
    x0 = bundle.initial_state
    if config.initial_state is not None:
        x0 = HybridState(config.initial_state.domain, config.initial_state.x)
        if x0.domain_id not in bundle.system.domains:
            raise ConfigError(f"Model {bundle.name} has no domain '{x0.domain_id}'")
    trace = execute(bundle.system, x0, _horizon(config, bundle), config.integrator)
    trace.to_csv(out / "trace.csv")
    log = event_log(trace)
    _write(log, out / "events.json")
    log.auto_log(config.logging)
    if plot:
        from .plotting import plot_trace
        plot_trace(trace, out / "trace.svg")
    logger.info("simulated %s: %d events in %.6g time units", bundle.name, len(trace.events), trace.total_time)
    return trace


def cmd_analyze(config: RunConfig, kind: str, out: Path, plot: bool = False) -> Report:
    bundle = SystemFactory.create(config)
    handle, guess = resolve_section(bundle, config.section, config.integrator)
    orbit = find_periodic_orbit(handle, guess)
    _write(OrbitReport(section=orbit.handle.section.name, domain_id=orbit.xi.domain_id,
                       fixed_point=list(map(float, orbit.xi.x)), period=orbit.period, residual=orbit.residual),
           out / "orbit.json")

    if kind == "poincare":
        report = spectral_summary(orbit.handle)
        if plot:
            from .plotting import plot_spectrum
            plot_spectrum(report, out / "spectrum.svg")
    elif kind == "reduce":
        fiber = None
        if config.section is None or config.section.name is not None:
            recipe = bundle.recipe(None if config.section is None else config.section.name)
            if recipe.fiber is not None:
                fiber = recipe.fiber(orbit.handle)
        report = analyze_reduction(orbit.handle, config.analysis, fiber_directions=fiber, seed=config.seed)
        if plot and report.contraction is not None:
            from .plotting import plot_contraction
            plot_contraction(report.contraction, out / "contraction.svg")
    else:
        report = phase_analysis(orbit, config.analysis, config.seed)
        if plot:
            from .plotting import plot_phase
            plot_phase(report, out / "phase.svg")
    _write(report, out / f"{kind}.json")
    report.auto_log(config.logging)
    return report


def cmd_control(config: RunConfig, kind: str, out: Path, plot: bool = False) -> Report:
    if kind == "embed":
        if config.model != "polyped":
            raise ConfigError("control embed needs the polyped model")
        params = get_model("polyped").parse(config.params)
        report = embedding_report(params, config.embed, config.seed)
        _write_table(pd.DataFrame([r.model_dump() for r in report.rows]), out / "embedding.csv")
    else:
        if config.section is not None and config.section.name is None:
            raise ConfigError("control deadbeat needs a named section")
        bundle = SystemFactory.create(config)
        report = control_analysis(bundle, config.control, config.section.name if config.section else None,
                                  config.integrator, config.seed)
        rows = [{"sample": i, "residual": r.residual, **{f"x_{j + 1}": v for j, v in enumerate(r.x)},
                 **{f"theta_{j + 1}": v for j, v in enumerate(r.theta)}}
                for i, r in enumerate(report.residuals)]
        _write_table(pd.DataFrame(rows), out / "deadbeat_residuals.csv")
        if plot and report.residuals:
            from .plotting import plot_residuals
            plot_residuals(report, out / "residuals.svg")
    _write(report, out / f"{kind}.json")
    report.auto_log(config.logging)
    return report


if __name__ == "__main__":
    sys.exit(main())
