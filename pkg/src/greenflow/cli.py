"""Command-line interface: ``greenflow <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from pathlib import Path

from . import io
from .dcfs import most_critical_first
from .experiment import PRESETS, ExperimentConfig, config_from_dict, generate_flows, run_experiment
from .fmcf import FmcfInfeasible, build_intervals, fractional_lower_bound_detail, solve_intervals
from .model import ConfigError, DomainError, PowerParams, Schedule, dynamic_energy, is_feasible, schedule_energy
from .oracles import (BudgetExceeded, OracleInfeasible, oracle_dcfs, oracle_dcfsr, shortest_path_baseline,
                      shortest_path_routes)
from .rounding import MAX_RETRIES, RoundingFailed, random_schedule
from .topology import Disconnected, TopologySpec, generate_topology

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVALID = 0, 2, 3, 4


class Invalid(Exception):
    """Validation failed; carries the report document."""

    def __init__(self, doc):
        super().__init__("schedule failed validation")
        self.doc = doc


def _power(args) -> PowerParams:
    if args.sigma == "half-capacity":
        return PowerParams.half_capacity_sigma(args.mu, args.alpha, args.capacity)
    return PowerParams(float(args.sigma), args.mu, args.alpha, args.capacity)


def _emit(args, doc=None, text=None):
    if text is None:
        text = io.dumps(doc)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _schedule_doc(schedule: Schedule, network, method: str) -> dict:
    doc = io.schedule_to_dict(schedule)
    doc["method"] = method
    doc["energy"] = schedule_energy(schedule, network)
    doc["dynamic_energy"] = dynamic_energy(schedule, network)
    return doc


def _schedule_csv(schedule: Schedule) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("flow", "link", "start", "end", "rate"))
    for plan in schedule.plans:
        for lid in plan.path:
            for p in plan.on_link(lid):
                w.writerow((plan.flow_id, lid, repr(p.start), repr(p.end), repr(p.rate)))
    return buf.getvalue()


def _emit_schedule(args, schedule, network, method):
    if args.format == "csv":
        _emit(args, text=_schedule_csv(schedule))
    else:
        _emit(args, _schedule_doc(schedule, network, method))


def cmd_gen_topology(args):
    net = generate_topology(TopologySpec(args.kind, args.size), _power(args))
    _emit(args, io.instance_to_dict(net, []))


def cmd_gen_flows(args):
    if args.instance:
        net = io.load_instance(args.instance)[0]
    else:
        net = generate_topology(TopologySpec(args.kind, args.size), _power(args))
    config = ExperimentConfig(flow_counts=(max(args.count, 1),), w_mean=args.w_mean, w_std=args.w_std,
                              horizon=(args.start, args.end))
    flows = generate_flows(config, args.seed, args.count, net)
    _emit(args, io.instance_to_dict(net, flows))


def cmd_dcfs(args):
    net, flows, paths = io.load_instance(args.instance)
    if paths is None:
        raise ConfigError("dcfs needs a 'paths' section in the instance")
    _emit_schedule(args, most_critical_first(net, flows, paths), net, "most-critical-first")


def cmd_dcfsr(args):
    net, flows, _ = io.load_instance(args.instance)
    frac = solve_intervals(net, flows)
    if args.dump_fractional:
        Path(args.dump_fractional).write_text(io.dumps(io.fractional_to_dict(frac)))
    schedule, diag = random_schedule(net, flows, seed=args.seed, max_retries=args.max_retries, fractional=frac)
    if args.format == "csv":
        _emit(args, text=_schedule_csv(schedule))
        return
    doc = _schedule_doc(schedule, net, "random-schedule")
    doc["diagnostics"] = {"retries": diag.retries, "lambda": diag.lam, "max_density": diag.max_density,
                          "interval_objectives": diag.objectives}
    _emit(args, doc)


def cmd_baseline(args):
    net, flows, _ = io.load_instance(args.instance)
    _emit_schedule(args, shortest_path_baseline(net, flows), net, "sp+mcf")


def cmd_oracle_dcfs(args):
    net, flows, paths = io.load_instance(args.instance)
    if paths is None:
        raise ConfigError("oracle-dcfs needs a 'paths' section in the instance")
    res = oracle_dcfs(net, flows, paths, seed=args.seed)
    _emit(args, {"method": res.method, "objective": res.objective, "variables": res.variables,
                 "evaluations": res.evaluations})


def cmd_oracle_dcfsr(args):
    net, flows, _ = io.load_instance(args.instance)
    res = oracle_dcfsr(net, flows)
    _emit(args, {"method": res.method, "objective": res.objective,
                 "variables": {"paths": {k: list(v) for k, v in res.variables["paths"].items()}},
                 "evaluations": res.evaluations})


def cmd_lb(args):
    net, flows, _ = io.load_instance(args.instance)
    structure = build_intervals(flows)
    start = solve_intervals(net, flows, structure)
    lb = fractional_lower_bound_detail(net, flows, structure, rtol=args.tolerance or 1e-3, start=start)
    _emit(args, {"method": "time-expanded-relaxation", "lower_bound": lb.value, "relaxation_primal": lb.primal,
                 "iterations": lb.iterations})


def cmd_experiment(args):
    config = PRESETS[args.preset]
    if args.config:
        config = config_from_dict(io.read_json(args.config), config)
    overrides = {}
    if args.flow_counts:
        overrides["flow_counts"] = tuple(args.flow_counts)
    if args.repetitions is not None:
        overrides["repetitions"] = args.repetitions
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.max_retries is not None:
        overrides["max_retries"] = args.max_retries
    if overrides:
        config = config_from_dict(overrides, config)
    result = run_experiment(config, json_path=args.summary, plot_path=args.plot_data)
    if args.format == "json":
        _emit(args, result.summary())
    else:
        _emit(args, text=result.csv_text())
    if result.failed:
        raise RoundingFailed(f"{len(result.failed)} runs failed")


def cmd_validate(args):
    net, flows, _ = io.load_instance(args.instance)
    schedule = io.load_schedule(args.schedule)
    tol = args.tolerance if args.tolerance is not None else 1e-9
    report = is_feasible(schedule, flows, net, volume_rtol=tol, atol=tol)
    doc = {"feasible": report.ok, "violations": report.violations, "mode": schedule.mode}
    if report.ok:
        doc["energy"] = schedule_energy(schedule, net)
        doc["dynamic_energy"] = dynamic_energy(schedule, net)
    _emit(args, doc)
    if not report.ok:
        raise Invalid(doc)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--output", "-o", default=None, help="write here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--tolerance", type=float, default=None)
    common.add_argument("-v", "--verbose", action="count", default=0)

    power = argparse.ArgumentParser(add_help=False)
    power.add_argument("--sigma", default="0", help="idle power, or 'half-capacity'")
    power.add_argument("--mu", type=float, default=1.0)
    power.add_argument("--alpha", type=float, default=2.0)
    power.add_argument("--capacity", type=float, default=1e6)

    topo = argparse.ArgumentParser(add_help=False)
    topo.add_argument("--kind", choices=("fat-tree", "line", "parallel-links"), default="fat-tree")
    topo.add_argument("--size", type=int, default=4)

    parser = argparse.ArgumentParser(prog="greenflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-topology", parents=[common, power, topo])
    p.set_defaults(func=cmd_gen_topology)

    p = sub.add_parser("gen-flows", parents=[common, power, topo])
    p.add_argument("--instance", help="take the network from this instance file")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--w-mean", type=float, default=10.0)
    p.add_argument("--w-std", type=float, default=3.0)
    p.add_argument("--start", type=float, default=1.0)
    p.add_argument("--end", type=float, default=100.0)
    p.set_defaults(func=cmd_gen_flows)

    for verb, func in (("dcfs", cmd_dcfs), ("baseline", cmd_baseline), ("oracle-dcfs", cmd_oracle_dcfs),
                       ("oracle-dcfsr", cmd_oracle_dcfsr), ("lb", cmd_lb)):
        p = sub.add_parser(verb, parents=[common])
        p.add_argument("instance")
        p.set_defaults(func=func)

    p = sub.add_parser("dcfsr", parents=[common])
    p.add_argument("instance")
    p.add_argument("--max-retries", type=int, default=MAX_RETRIES)
    p.add_argument("--dump-fractional", metavar="PATH")
    p.set_defaults(func=cmd_dcfsr)

    p = sub.add_parser("experiment", parents=[common])
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--config", help="JSON file overriding preset fields")
    p.add_argument("--flow-counts", type=int, nargs="+")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--summary", metavar="PATH", help="also write the JSON summary here")
    p.add_argument("--plot-data", metavar="PATH", help="write per-series JSON for plotting")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("validate", parents=[common])
    p.add_argument("instance")
    p.add_argument("schedule")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.verb != "experiment" and args.format is None:
        args.format = "json"
    if args.verb == "experiment" and args.format is None:
        args.format = "csv"
    if args.verb not in ("experiment",) and args.seed is None:
        args.seed = 0
    try:
        args.func(args)
    except Invalid:
        return EXIT_INVALID
    except (ConfigError, DomainError, Disconnected, BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FmcfInfeasible, RoundingFailed, OracleInfeasible) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
