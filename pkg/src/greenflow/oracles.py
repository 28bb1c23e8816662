"""Reference solvers and baselines used to check the main algorithms."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .dcfs import most_critical_first
from .model import Flow, Network, PowerParams, Schedule, dynamic_energy, horizon, schedule_energy
from .topology import Disconnected, shortest_path, simple_paths

MAX_ORACLE_FLOWS = 6
MAX_COMBINATIONS = 10 ** 5


class OracleInfeasible(Exception):
    pass


class BudgetExceeded(Exception):
    pass


@dataclass
class OracleResult:
    objective: float
    variables: dict
    method: str
    evaluations: int
    notes: list[str] = field(default_factory=list)


def window_constraints(flows: Sequence[Flow], paths: Mapping[str, Sequence[str]]):
    """Binding windows of the fixed-route program: per link, every [a, b] spanned
    by release/deadline values of that link's flows, with the flows it contains.

    Any subset J' of a link's flows is dominated by the window
    [min r, max d] over J', which contains J', so these windows imply every
    subset constraint.
    """
    by_link: dict[str, list[Flow]] = {}
    for f in flows:
        for lid in paths[f.id]:
            by_link.setdefault(lid, []).append(f)
    # the tightest window per contained flow set
    tight: dict[frozenset, float] = {}
    for members in by_link.values():
        for a in {f.r for f in members}:
            for b in {f.d for f in members}:
                if b <= a:
                    continue
                inside = frozenset(f.id for f in members if f.r >= a and f.d <= b)
                if inside:
                    tight[inside] = min(b - a, tight.get(inside, math.inf))
    return sorted(((v, k) for k, v in tight.items()), key=lambda t: (t[0], sorted(t[1])))


def oracle_dcfs(network: Network, flows: Sequence[Flow], paths: Mapping[str, Sequence[str]],
                restarts: int = 10, seed: int = 0) -> OracleResult:
    """Minimise sum_i |P_i| w_i mu s_i^(alpha-1) under the per-link window constraints.

    Generic constrained optimisation (SLSQP) over log-rates u_i = log s_i, in
    which both the objective and the constraints are convex; the best of
    several random starts is returned.
    """
    if len(flows) > MAX_ORACLE_FLOWS:
        raise BudgetExceeded(f"oracle_dcfs handles at most {MAX_ORACLE_FLOWS} flows, got {len(flows)}")
    pw = network.power
    ids = [f.id for f in flows]
    index = {fid: i for i, fid in enumerate(ids)}
    w = np.array([f.w for f in flows])
    hops = np.array([len(paths[fid]) for fid in ids], dtype=float)
    dens = np.array([f.density for f in flows])
    cons = window_constraints(flows, paths)
    a1 = pw.alpha - 1
    coef = hops * w * pw.mu
    # rescale rates by the max density so the variables are O(1)
    scale = dens.max()
    cs = coef * scale ** a1
    norm = cs.sum()

    def obj(u):
        return float(np.dot(cs, np.exp(a1 * u))) / norm

    def grad(u):
        return cs * a1 * np.exp(a1 * u) / norm

    constraints = []
    for length, members in cons:
        idx = np.array(sorted(index[m] for m in members))
        ww = w[idx] / scale / length

        def g(u, idx=idx, ww=ww):
            return 1.0 - float(np.dot(ww, np.exp(-u[idx])))

        def jac(u, idx=idx, ww=ww):
            out = np.zeros_like(u)
            out[idx] = ww * np.exp(-u[idx])
            return out

        constraints.append({"type": "ineq", "fun": g, "jac": jac})

    rng = np.random.default_rng(seed)
    best = None
    evals = 0
    for k in range(restarts):
        # start at a strictly feasible point: every flow fast enough to fit all windows
        boost = len(flows) * rng.uniform(1.0, 4.0, size=len(flows))
        u0 = np.log(dens / scale * boost)
        # SLSQP probes far-off points where exp overflows harmlessly
        with np.errstate(over="ignore", invalid="ignore"):
            res = minimize(obj, u0, jac=grad, constraints=constraints, method="SLSQP",
                           options={"ftol": 1e-15, "maxiter": 1000})
        evals += res.nfev
        u = res.x
        resid = max([0.0] + [-c["fun"](u) for c in constraints])
        if resid > 1e-9:
            # push rates up just enough to restore feasibility
            u = u + math.log1p(resid) + 1e-12
            resid = max([0.0] + [-c["fun"](u) for c in constraints])
        if resid > 1e-8:
            continue
        value = obj(u) * norm
        if best is None or value < best[0]:
            best = (value, u)
    if best is None:
        raise OracleInfeasible("no feasible rate vector found")
    rates = {fid: float(math.exp(best[1][i]) * scale) for i, fid in enumerate(ids)}
    return OracleResult(best[0], {"rates": rates}, "fixed-route-slsqp-logrates", evals)


def fixed_route_energy(network: Network, flows: Sequence[Flow], paths, rates: Mapping[str, float]) -> float:
    pw = network.power
    return math.fsum(len(paths[f.id]) * f.w * pw.mu * rates[f.id] ** (pw.alpha - 1) for f in flows)


def _combination_energy(network, flows, paths, use_oracle):
    pw = network.power
    if use_oracle:
        res = oracle_dcfs(network, flows, paths)
        if max(res.variables["rates"].values()) > pw.capacity * (1 + 1e-9):
            return None
        dyn = res.objective
    else:
        sched = most_critical_first(network, flows, paths)
        if sched.warnings:
            return None
        dyn = dynamic_energy(sched, network)
    used = {l for f in flows for l in paths[f.id]}
    t0, t1 = horizon(flows)
    return dyn + pw.sigma * (t1 - t0) * len(used)


def oracle_dcfsr(network: Network, flows: Sequence[Flow], use_oracle: bool = False,
                 max_combinations: int = MAX_COMBINATIONS) -> OracleResult:
    """Exhaustive joint routing: try every combination of simple paths.

    Each combination is scheduled optimally (Most-Critical-First, or the fixed-route
    oracle when ``use_oracle``); combinations that need a rate above capacity
    or cannot place every flow are skipped. Idle power of every used link is
    charged over the whole horizon.
    """
    candidates = [simple_paths(network, f.p, f.q) for f in flows]
    count = math.prod(len(c) for c in candidates)
    if count > max_combinations:
        raise BudgetExceeded(f"{count} path combinations exceed the budget of {max_combinations}")
    best = None
    evaluated = 0
    seen = set()
    for combo in itertools.product(*candidates):
        paths = {f.id: p for f, p in zip(flows, combo)}
        # parallel links make many combinations equivalent up to relabelling only
        # when links are interchangeable; dedupe exact repeats cheaply
        key = tuple(combo)
        if key in seen:
            continue
        seen.add(key)
        evaluated += 1
        value = _combination_energy(network, flows, paths, use_oracle)
        if value is None:
            continue
        if best is None or value < best[0] * (1 - 1e-12):
            best = (value, paths)
    if best is None:
        raise OracleInfeasible("every path combination violates capacity")
    return OracleResult(best[0], {"paths": best[1]}, "dcfsr-enumeration", evaluated)


def shortest_path_routes(network: Network, flows: Sequence[Flow]) -> dict[str, tuple[str, ...]]:
    routes = {}
    for f in flows:
        try:
            routes[f.id] = shortest_path(network, f.p, f.q)
        except Disconnected as exc:
            raise Disconnected(f"flow {f.id}: {exc}") from None
    return routes


def shortest_path_baseline(network: Network, flows: Sequence[Flow]) -> Schedule:
    """SP+MCF: hop-count shortest routes, then Most-Critical-First."""
    return most_critical_first(network, flows, shortest_path_routes(network, flows))


def r_opt(params: PowerParams) -> float:
    """Rate minimising power per unit of traffic, (sigma / (mu (alpha-1)))^(1/alpha)."""
    if params.sigma == 0:
        return 0.0
    return (params.sigma / (params.mu * (params.alpha - 1))) ** (1.0 / params.alpha)


def inapprox_gamma(alpha: float) -> float:
    """Ratio below which no polynomial algorithm can approximate joint routing (unless P=NP)."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    return 1.5 * (1 + ((2.0 / 3.0) ** alpha - 1) / alpha)


def oracle_dcfs_exclusive(network: Network, flows: Sequence[Flow],
                          paths: Mapping[str, Sequence[str]]) -> OracleResult:
    """Fixed-route optimum when a flow holds every link of its path while it sends.

    Time is cut at every release and deadline; z[i, k] is the time flow i
    transmits inside slot k, and flows sharing a link may not exceed the slot
    length together. Exact whenever the path-conflict graph is perfect (lines,
    parallel links, trees); a relaxation otherwise.
    """
    import cvxpy as cp

    pw = network.power
    cuts = sorted({t for f in flows for t in (f.r, f.d)})
    slots = list(zip(cuts, cuts[1:]))
    ids = [f.id for f in flows]
    z = cp.Variable((len(flows), len(slots)), nonneg=True)
    cons = []
    for i, f in enumerate(flows):
        for k, (a, b) in enumerate(slots):
            if a < f.r or b > f.d:
                cons.append(z[i, k] == 0)
    links = sorted({l for f in flows for l in paths[f.id]})
    for lid in links:
        rows = [i for i, f in enumerate(flows) if lid in paths[f.id]]
        for k, (a, b) in enumerate(slots):
            cons.append(cp.sum(z[rows, k]) <= b - a)
    busy = cp.sum(z, axis=1)
    # busy time as a fraction of each span keeps every term O(1)
    span = np.array([f.d - f.r for f in flows])
    at_density = np.array([len(paths[f.id]) * pw.mu * f.w * f.density ** (pw.alpha - 1) for f in flows])
    weights = at_density / at_density.sum()
    frac = cp.multiply(busy, 1.0 / span)
    prob = cp.Problem(cp.Minimize(weights @ cp.power(frac, 1 - pw.alpha)), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise OracleInfeasible(f"time-indexed program status {prob.status}")
    t = np.asarray(busy.value).ravel()
    rates = {fid: flows[i].w / t[i] for i, fid in enumerate(ids)}
    value = math.fsum(len(paths[f.id]) * pw.mu * f.w * rates[f.id] ** (pw.alpha - 1) for f in flows)
    return OracleResult(value, {"rates": rates, "slot_time": np.asarray(z.value)}, "exclusive-time-indexed", 1)
