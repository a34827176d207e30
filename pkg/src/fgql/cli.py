"""Command line interface: ``fgql fit | simulate | study | validate-schedule``.

Every flag can also be given as ``key=value`` in a ``--config`` file (flag
name without dashes, ``-`` and ``_`` interchangeable).  Flags win over the
config file.  Scenario settings for ``simulate`` and ``study`` are
config-only: ``group_sizes``, ``true_beta`` (comma separated), ``error``
(normal, student_t, laplace), ``df``, ``scale``, ``growth_c`` and
``pad_group_size``.

Exit status: 0 success, 1 invalid input or infeasible request, 2 fit did not
converge (``fit``; the result is still written) or inadmissible schedule
(``validate-schedule``).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .io import (
    InputError,
    arrange_groups,
    dumps_json,
    parse_group_spec,
    read_config,
    read_csv,
    read_group_spec,
    sha256_of,
    write_csv,
    write_group_spec,
    write_json,
)
from .model import FitConfig, GroupedCoefficients, GroupedDesign, SolverControls
from .simulation import (
    ErrorDistribution,
    SimulationScenario,
    describe_scenario,
    generate,
    normality_report,
    rate_report,
    run_replications,
    selection_report,
)
from .solver import fit_adaptive
from .weights import TuningSchedule, default_schedule, validate_schedule

log = logging.getLogger("fgql")

STUDY_KINDS = ("selection", "normality", "rate", "all")

_DEFAULTS = {
    "tau": "0.5", "gamma": "1.0", "schedule": "fixed", "c": "0.0", "alpha": "0.0",
    "kappa": "1.0", "ratio": "1.0", "seed": "0", "reps": "200",
}


def _regime(name: str) -> str:
    table = {"fixed": "fixed_p", "fixed_p": "fixed_p", "growing": "growing_p",
             "growing_p": "growing_p"}
    if name not in table:
        raise InputError(f"unknown schedule {name!r} (expected fixed or growing)")
    return table[name]


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


class _Settings:
    """Resolved parameters: CLI flag, then config file, then built-in default."""

    def __init__(self, args: argparse.Namespace):
        self.config = read_config(args.config) if getattr(args, "config", None) else {}
        self.args = args

    def get(self, key: str, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.config:
            return self.config[key]
        return _DEFAULTS.get(key, default)

    def number(self, key: str, default=None, kind=float):
        value = self.get(key, default)
        if value is None:
            return None
        try:
            return kind(value)
        except (TypeError, ValueError):
            raise InputError(f"{key} must be a number, got {value!r}") from None


def _schedule_from(settings: _Settings) -> TuningSchedule:
    regime = _regime(settings.get("schedule"))
    gamma = settings.number("gamma")
    c = settings.number("c")
    alpha = settings.number("alpha")
    exponent = settings.number("exponent")
    try:
        schedule, _ = default_schedule(
            1, gamma, regime, c, alpha, settings.number("kappa"), settings.number("ratio"),
            exponent)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return schedule


def _manifest(command: str, settings: _Settings, inputs=(), extra=None) -> dict:
    resolved = {k: v for k, v in settings.config.items()}
    for k, v in vars(settings.args).items():
        if v is not None and k not in ("func", "config", "out", "record_timing", "data", "command", "verbose"):
            resolved[k] = v
    manifest = {
        "command": command,
        "library_version": __version__,
        "inputs": [{"name": Path(p).name, "sha256": sha256_of(p)} for p in inputs],
        "parameters": {k: str(v) for k, v in sorted(resolved.items())},
    }
    if extra:
        manifest.update(extra)
    return manifest


def cmd_fit(args) -> int:
    started = time.perf_counter()
    settings = _Settings(args)
    names, y, X = read_csv(args.data)
    if args.group_spec:
        spec = parse_group_spec(args.group_spec)
    elif args.groups or settings.get("groups"):
        spec = read_group_spec(args.groups or settings.get("groups"))
    else:
        sidecar = Path(args.data).with_suffix(".groups.txt")
        if not sidecar.exists():
            raise InputError("no group specification (use --groups or --group-spec)")
        spec = read_group_spec(sidecar)
    ordered, X, sizes, group_ids = arrange_groups(names, X, spec)
    data = GroupedDesign(y, X, sizes)
    if data.r >= data.n:
        raise InputError(
            f"pilot fit needs fewer columns than observations (r={data.r}, n={data.n})")

    tau = settings.number("tau")
    gamma = settings.number("gamma")
    mu1, mu2 = settings.number("mu1"), settings.number("mu2")
    if (mu1 is None) != (mu2 is None):
        raise InputError("give both --mu1 and --mu2, or neither")
    if mu1 is not None:
        if mu1 < 0 or mu2 < 0 or not (np.isfinite(mu1) and np.isfinite(mu2)):
            raise InputError(f"tuning parameters must be nonnegative and finite, got {mu1}, {mu2}")
        schedule_doc = {"explicit": True, "mu1": mu1, "mu2": mu2}
    else:
        schedule = _schedule_from(settings)
        mu1, mu2 = schedule.mu(data.n)
        schedule_doc = {"explicit": False, **vars(schedule)}
    try:
        controls = SolverControls(max_iterations=settings.number("max_iterations", 10_000, int))
        config = FitConfig(tau, mu1, mu2, gamma, controls)
    except ValueError as exc:
        raise InputError(str(exc)) from None

    result, pilot, weights = fit_adaptive(data, config)
    converged = result.converged and pilot.converged
    coefficients = []
    for j, sl in enumerate(data.slices):
        coefficients.append({
            "group": j + 1,
            "columns": ordered[sl],
            "values": result.beta[sl].tolist(),
        })
    metrics = {"iterations": result.iterations, "pilot_iterations": pilot.iterations}
    if args.record_timing:
        metrics["wall_clock_seconds"] = time.perf_counter() - started
    document = {
        "kind": "fit",
        "n": data.n, "p": data.p, "r": data.r,
        "coefficients": coefficients,
        "active_groups": [j + 1 for j in result.active_groups],
        "fused_pairs": [[j, j + 1] for j in result.fused_pairs],
        "objective": result.objective_value,
        "converged": converged,
        "tuning": {"tau": tau, "gamma": gamma, "mu1": mu1, "mu2": mu2, "schedule": schedule_doc},
        "diagnostics": {
            "iterations": result.iterations,
            "pilot_iterations": pilot.iterations,
            "pilot_converged": pilot.converged,
            "pilot_objective": pilot.objective_value,
            "penalty_parameter": result.penalty_parameter,
            "primal_residual": float(result.primal_history[-1]) if result.primal_history.size else None,
            "dual_residual": float(result.dual_history[-1]) if result.dual_history.size else None,
            "weights_group": weights.w1,
            "weights_fusion": weights.w2,
        },
        "manifest": _manifest("fit", settings, [args.data], {"metrics": metrics}),
    }
    write_json(args.out, document)
    if not converged:
        log.warning("solver did not converge; result written and flagged")
        return 2
    return 0


def _scenario_from(settings: _Settings) -> SimulationScenario:
    # defaults reproduce the reference scenario: six groups of three, the first two (1, 1, 1)
    n = settings.number("n", 800, int)
    sizes = _ints(settings.get("group_sizes", "3,3,3,3,3,3"))
    values = _floats(settings.get("true_beta", "1,1,1,1,1,1,0,0,0,0,0,0,0,0,0,0,0,0"))
    if any(d < 1 for d in sizes):
        raise InputError("group sizes must be positive")
    if len(values) != sum(sizes):
        raise InputError(f"true_beta has {len(values)} entries, group sizes sum to {sum(sizes)}")
    family = settings.get("error", "normal")
    params = {}
    for key in ("df", "scale"):
        if settings.get(key) is not None:
            params[key] = settings.number(key)
    growth = settings.get("growth_c")
    try:
        error = ErrorDistribution(family, params, settings.number("tau"))
        pad = settings.get("pad_group_size")
        return SimulationScenario(
            GroupedCoefficients(values, tuple(sizes)), n, error,
            settings.number("seed", kind=int),
            growth_c=float(growth) if growth is not None else None,
            pad_group_size=int(pad) if pad is not None else None,
            alpha=settings.number("alpha"))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_simulate(args) -> int:
    settings = _Settings(args)
    scenario = _scenario_from(settings)
    replication = settings.number("replication", 0, int)
    try:
        data = generate(scenario, replication)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    names = []
    group_ids = []
    for j, d in enumerate(data.group_sizes, start=1):
        for k in range(1, d + 1):
            names.append(f"g{j}_x{k}")
            group_ids.append(j)
    write_csv(out, names, data.y, data.X)
    write_group_spec(out.with_suffix(".groups.txt"), names, group_ids)
    truth = scenario.beta
    write_json(out.with_suffix(".truth.json"), {
        "kind": "truth",
        "n": data.n, "p": data.p, "r": data.r,
        "replication": replication,
        "coefficients": [{"group": j + 1, "values": g.tolist()}
                         for j, g in enumerate(truth.groups())],
        "active_groups": [j + 1 for j in scenario.active_set],
        "fused_pairs": [[j, j + 1] for j in scenario.fused_truth],
        "scenario": describe_scenario(scenario),
        "manifest": _manifest("simulate", settings, [args.config] if args.config else []),
    })
    return 0


def cmd_study(args) -> int:
    started = time.perf_counter()
    settings = _Settings(args)
    kind = settings.get("kind", "all")
    if kind not in STUDY_KINDS:
        raise InputError(f"unknown study kind {kind!r} (expected one of {', '.join(STUDY_KINDS)})")
    scenario = _scenario_from(settings)
    schedule = _schedule_from(settings)
    default_ns = "400,1600" if kind == "rate" else "200,400,800"
    ns = _ints(settings.get("ns", default_ns))
    reps = settings.number("reps", kind=int)
    if reps < 1 or not ns:
        raise InputError("need reps >= 1 and at least one sample size")
    try:
        outcomes = run_replications(scenario, schedule, ns, reps)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    builders = {"selection": selection_report, "normality": normality_report, "rate": rate_report}
    wanted = list(builders) if kind == "all" else [kind]
    reports = {k: builders[k](scenario, schedule, ns, reps, outcomes).to_dict() for k in wanted}
    metrics = {"replications": reps * len(ns)}
    if args.record_timing:
        metrics["wall_clock_seconds"] = time.perf_counter() - started
    write_json(args.out, {
        "kind": "study",
        "study_kind": kind,
        "reports": reports,
        "manifest": _manifest("study", settings, [args.config] if args.config else [],
                              {"metrics": metrics}),
    })
    return 0


def cmd_validate_schedule(args) -> int:
    settings = _Settings(args)
    regime = _regime(settings.get("schedule"))
    exponent = settings.number("exponent")
    gamma = settings.number("gamma")
    if exponent is None:
        raise InputError("--exponent is required")
    schedule = TuningSchedule(exponent, gamma, regime, settings.number("c"),
                              settings.number("alpha"), settings.number("kappa"),
                              settings.number("ratio"))
    records = validate_schedule(schedule)
    admissible = all(r.satisfied for r in records)
    document = {
        "kind": "schedule_validation",
        "admissible": admissible,
        "conditions": [vars(r) for r in records],
        "schedule": vars(schedule),
    }
    n = settings.number("n", kind=int)
    if n:
        document["mu"] = list(schedule.mu(n))
    if args.out:
        write_json(args.out, document)
    else:
        sys.stdout.write(dumps_json(document))
    return 0 if admissible else 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--schedule", choices=["fixed", "growing"])
    p.add_argument("--c", type=float, help="group-count growth exponent")
    p.add_argument("--alpha", type=float, help="signal-decay exponent")
    p.add_argument("--kappa", type=float, help="schedule constant")
    p.add_argument("--ratio", type=float, help="mu2 / mu1")
    p.add_argument("--exponent", type=float, help="explicit schedule exponent")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fgql", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fgql {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the penalized estimator to a CSV dataset")
    p.add_argument("data", help="CSV with header; first column is the response")
    p.add_argument("--groups", help="sidecar file of column=group_id lines")
    p.add_argument("--group-spec", help="inline spec, e.g. 'a=1,b=1,c=2'")
    p.add_argument("--mu1", type=float)
    p.add_argument("--mu2", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--record-timing", action="store_true",
                   help="store wall-clock time in the manifest (output no longer reproducible)")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="write a simulated dataset plus truth sidecar")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--replication", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run Monte Carlo studies and write a report")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--kind")
    p.add_argument("--ns", help="comma separated sample sizes")
    p.add_argument("--record-timing", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("validate-schedule", help="check the rate conditions of a schedule")
    p.add_argument("--n", type=int, help="also report (mu1, mu2) at this n")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_validate_schedule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ValueError) as exc:
        print(f"fgql {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
