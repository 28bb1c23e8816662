"""Random instances and the LB / SP+MCF / RS comparison sweep."""
from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .fmcf import FmcfInfeasible, build_intervals, fractional_lower_bound_detail, solve_intervals
from .model import ConfigError, Flow, Network, PowerParams, is_feasible, schedule_energy
from .oracles import shortest_path_baseline
from .rounding import MAX_RETRIES, RoundingFailed, random_schedule
from .topology import TopologySpec, generate_topology

log = logging.getLogger(__name__)

CSV_COLUMNS = ("n_flows", "rep", "lb", "sp_mcf", "rs", "rs_over_lb", "sp_over_lb")
MIN_VOLUME = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str = "fat-tree"  # fat-tree | line | parallel-links | path to an instance file
    size: int = 4
    flow_counts: tuple[int, ...] = (40, 80, 120, 160, 200)
    w_mean: float = 10.0
    w_std: float = 3.0
    horizon: tuple[float, float] = (1.0, 100.0)
    sigma: float = 0.0
    mu: float = 1.0
    alpha: float = 2.0
    # large enough that every drawn instance fits; the sweep compares energy, not admission
    capacity: float = 1e6
    seed: int = 0
    repetitions: int = 10
    max_retries: int = MAX_RETRIES
    fmcf_rtol: float = 1e-4
    lb_rtol: float = 1e-2
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.flow_counts or any(int(n) != n or n < 1 for n in self.flow_counts):
            raise ConfigError("flow counts must be positive integers")
        if not self.w_std >= 0:
            raise ConfigError("w_std must be >= 0")
        if not self.horizon[0] < self.horizon[1]:
            raise ConfigError("horizon must be a non-empty interval")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        object.__setattr__(self, "flow_counts", tuple(int(n) for n in self.flow_counts))
        object.__setattr__(self, "horizon", tuple(float(t) for t in self.horizon))
        self.power  # validates the power parameters

    @property
    def power(self) -> PowerParams:
        return PowerParams(self.sigma, self.mu, self.alpha, self.capacity)

    def network(self) -> Network:
        if self.topology in ("fat-tree", "line", "parallel-links"):
            return generate_topology(TopologySpec(self.topology, self.size), self.power)
        from .io import load_instance

        net = load_instance(self.topology)[0]
        return Network(net.nodes, net.links, self.power, net.hosts)


def _half_capacity_sigma(mu, alpha, capacity):
    return PowerParams.half_capacity_sigma(mu, alpha, capacity).sigma


PRESETS = {
    "desk": ExperimentConfig(),
    "fat-tree-8": ExperimentConfig(size=8),
    "sigma0": ExperimentConfig(sigma=0.0),
    "half-capacity-sigma": ExperimentConfig(capacity=100.0, sigma=_half_capacity_sigma(1.0, 2.0, 100.0)),
}


def instance_seed(config: ExperimentConfig, n_flows: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.seed, n_flows, rep])


def generate_flows(config: ExperimentConfig, seed, count: int | None = None,
                   network: Network | None = None) -> list[Flow]:
    """Random flows: (r, d) uniform over the horizon, redrawn until r < d; w normal, redrawn
    until w >= 0.1; source and destination distinct hosts drawn uniformly."""
    count = config.flow_counts[0] if count is None else count
    network = network or config.network()
    hosts = list(network.hosts)
    if len(hosts) < 2:
        raise ConfigError("need at least two hosts")
    rng = np.random.default_rng(seed)
    lo, hi = config.horizon
    flows = []
    for i in range(count):
        while True:
            r, d = rng.uniform(lo, hi, size=2)
            if r < d:
                break
        while True:
            w = rng.normal(config.w_mean, config.w_std)
            if w >= MIN_VOLUME:
                break
        p, q = rng.choice(len(hosts), size=2, replace=False)
        flows.append(Flow(f"f{i:04d}", float(w), float(r), float(d), hosts[p], hosts[q]))
    return flows


def ratio_bound(lam: float, n_flows: int, max_density: float, alpha: float) -> float:
    """lambda^alpha (n^2 log D)^(alpha-1) with constant 1; NaN when log D <= 0."""
    log_d = math.log(max_density)
    if log_d <= 0:
        return math.nan
    return lam ** alpha * (n_flows ** 2 * log_d) ** (alpha - 1)


@dataclass
class Row:
    n_flows: int
    rep: int
    lb: float
    sp_mcf: float
    rs: float
    rs_retries: int = -1
    lam: float = math.nan
    max_density: float = math.nan
    ratio_bound: float = math.nan
    lb_gap: float = math.nan
    sp_warnings: int = 0
    times: dict = field(default_factory=dict)
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    @property
    def rs_over_lb(self) -> float:
        return self.rs / self.lb if self.lb > 0 else math.nan

    @property
    def sp_over_lb(self) -> float:
        return self.sp_mcf / self.lb if self.lb > 0 else math.nan


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[Row]

    @property
    def failed(self) -> list[Row]:
        return [r for r in self.rows if r.failed]

    def means(self) -> dict[int, dict[str, float]]:
        out = {}
        for n in self.config.flow_counts:
            ok = [r for r in self.rows if r.n_flows == n and not r.failed]
            out[n] = {
                "rs_over_lb": float(np.mean([r.rs_over_lb for r in ok])) if ok else math.nan,
                "sp_over_lb": float(np.mean([r.sp_over_lb for r in ok])) if ok else math.nan,
                "runs": len(ok),
            }
        return out

    def converges(self, factor: float = 1.2) -> bool:
        """Last sweep point's mean RS/LB is at most ``factor`` times the middle point's."""
        series = [self.means()[n]["rs_over_lb"] for n in self.config.flow_counts]
        return series[-1] <= factor * series[(len(series) - 1) // 2]

    def csv_text(self) -> str:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            if r.failed:
                writer.writerow([r.n_flows, r.rep, _num(r.lb), _num(r.sp_mcf), "", "", _num(r.sp_over_lb)])
            else:
                writer.writerow([r.n_flows, r.rep, _num(r.lb), _num(r.sp_mcf), _num(r.rs),
                                 _num(r.rs_over_lb), _num(r.sp_over_lb)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "config": _jsonable(asdict(self.config)),
            "means": {str(n): v for n, v in self.means().items()},
            "converges": self.converges(),
            "failed": [{"n_flows": r.n_flows, "rep": r.rep, "error": r.error} for r in self.failed],
            "runs": [
                {"n_flows": r.n_flows, "rep": r.rep, "rs_retries": r.rs_retries, "lam": r.lam,
                 "max_density": r.max_density, "ratio_bound": r.ratio_bound,
                 "rs_over_lb": r.rs_over_lb, "within_ratio_bound": bool(r.rs_over_lb <= r.ratio_bound),
                 "lb_gap": r.lb_gap, "sp_warnings": r.sp_warnings, "seconds": r.times}
                for r in self.rows
            ],
        }

    def plot_data(self) -> dict:
        means = self.means()
        xs = list(self.config.flow_counts)
        return {"x": xs, "series": {
            "LB": [1.0] * len(xs),
            "SP+MCF": [means[n]["sp_over_lb"] for n in xs],
            "RS": [means[n]["rs_over_lb"] for n in xs],
        }}


def _num(x: float) -> str:
    return "" if x is None or math.isnan(x) else repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def run_instance(config: ExperimentConfig, network: Network, flows: Sequence[Flow], n_flows: int, rep: int,
                 rs_seed: int) -> Row:
    """LB, SP+MCF and RS energies of one instance."""
    times = {}
    t = time.perf_counter()
    sp = shortest_path_baseline(network, flows)
    sp_energy = schedule_energy(sp, network)
    times["sp_mcf"] = time.perf_counter() - t
    structure = build_intervals(flows)
    row = Row(n_flows, rep, math.nan, sp_energy, math.nan, lam=structure.lam,
              max_density=max(f.density for f in flows), sp_warnings=len(sp.warnings), times=times)
    row.ratio_bound = ratio_bound(row.lam, len(flows), row.max_density, config.alpha)
    try:
        t = time.perf_counter()
        frac = solve_intervals(network, flows, structure, rtol=config.fmcf_rtol)
        times["fmcf"] = time.perf_counter() - t
        t = time.perf_counter()
        lb = fractional_lower_bound_detail(network, flows, structure, rtol=config.lb_rtol, start=frac)
        times["lb"] = time.perf_counter() - t
        row.lb = lb.value
        row.lb_gap = (lb.primal - lb.value) / lb.primal if lb.primal > 0 else 0.0
        t = time.perf_counter()
        rs, diag = random_schedule(network, flows, seed=rs_seed, max_retries=config.max_retries, fractional=frac)
        times["rs"] = time.perf_counter() - t
    except (RoundingFailed, FmcfInfeasible) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    report = is_feasible(rs, flows, network)
    if not report.ok:
        row.error = f"infeasible RS schedule: {report.violations[:3]}"
        return row
    row.rs = schedule_energy(rs, network)
    row.rs_retries = diag.retries
    return row


def _job(args) -> Row:
    config, n, rep = args
    network = config.network()
    ss = instance_seed(config, n, rep)
    flow_seed, rs_seed = ss.spawn(2)
    flows = generate_flows(config, flow_seed, n, network)
    rs_seed = int(rs_seed.generate_state(1)[0])
    row = run_instance(config, network, flows, n, rep, rs_seed)
    if not row.failed:
        log.info("n=%d rep=%d lb=%.6g sp/lb=%.4f rs/lb=%.4f bound=%.4g", n, rep, row.lb, row.sp_over_lb,
                 row.rs_over_lb, row.ratio_bound)
    else:
        log.warning("n=%d rep=%d failed: %s", n, rep, row.error)
    return row


def run_experiment(config: ExperimentConfig, csv_path=None, json_path=None, plot_path=None) -> ExperimentResult:
    """Sweep flow counts x repetitions; rows come back in (flow count, repetition) order
    whatever the number of workers."""
    jobs = [(config, n, rep) for n in config.flow_counts for rep in range(config.repetitions)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            rows = list(pool.map(_job, jobs))
    else:
        rows = [_job(j) for j in jobs]
    result = ExperimentResult(config, rows)
    if csv_path is not None:
        Path(csv_path).write_text(result.csv_text())
    if json_path is not None:
        Path(json_path).write_text(json.dumps(_jsonable(result.summary()), indent=2) + "\n")
    if plot_path is not None:
        Path(plot_path).write_text(json.dumps(_jsonable(result.plot_data()), indent=2) + "\n")
    return result


def config_from_dict(doc: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    known = set(asdict(base))
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    doc = dict(doc)
    for key in ("flow_counts", "horizon"):
        if key in doc:
            doc[key] = tuple(doc[key])
    try:
        return replace(base, **doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
