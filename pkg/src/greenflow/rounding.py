"""Randomised rounding of the per-interval fractional routing into one path per flow."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fmcf import FractionalSolution, IntervalStructure, build_intervals, solve_intervals
from .model import CAPACITY_ATOL, POOLED, Flow, FlowPlan, Network, Piece, Schedule, edf_order, horizon

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
MAX_RETRIES = 64


class RoundingFailed(Exception):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


def extract_paths(y: Mapping[str, float], flow: Flow, network: Network,
                  tol: float = RESIDUAL_TOL) -> list[tuple[tuple[str, ...], float]]:
    """Peel source-to-dest paths off a signed link-flow vector.

    Each round follows links carrying residual flow in the direction of
    travel (fewest hops, ties by link id), takes the smallest residual on
    the path as its weight and subtracts it. At least one link empties per
    round. Weights are renormalised to sum to 1.
    """
    # residual[(link, forward)] where forward means u -> v
    residual = {}
    for lid, v in y.items():
        if abs(v) > tol:
            residual[lid] = v
    out: list[tuple[tuple[str, ...], float]] = []
    for _ in range(len(network.links) + 1):
        if _outflow(residual, flow.p, network) <= tol:
            break
        path = _bfs(residual, flow, network, tol)
        if path is None:
            raise RuntimeError(f"flow {flow.id}: residual flow left but no path to {flow.q}")
        lids, nodes = path
        weight = min(abs(residual[l]) for l in lids)
        for lid, a in zip(lids, nodes):
            sign = 1.0 if network.link(lid).u == a else -1.0
            residual[lid] -= sign * weight
            if abs(residual[lid]) <= tol:
                del residual[lid]
        out.append((lids, weight))
    total = math.fsum(w for _, w in out)
    if total <= 0:
        raise RuntimeError(f"flow {flow.id}: no flow to decompose")
    return [(p, w / total) for p, w in out]


def _outflow(residual, node, network):
    s = 0.0
    for link in network.incident(node):
        v = residual.get(link.id, 0.0)
        s += v if link.u == node else -v
    return s


def _bfs(residual, flow, network, tol):
    prev = {flow.p: None}
    queue = deque([flow.p])
    while queue:
        u = queue.popleft()
        if u == flow.q:
            break
        for link in sorted(network.incident(u), key=lambda l: l.id):
            v = residual.get(link.id, 0.0)
            forward = link.u == u
            if (v > tol if forward else v < -tol):
                w = link.other(u)
                if w not in prev:
                    prev[w] = (u, link.id)
                    queue.append(w)
    if flow.q not in prev:
        return None
    lids, nodes = [], []
    node = flow.q
    while prev[node] is not None:
        u, lid = prev[node]
        lids.append(lid)
        nodes.append(u)
        node = u
    return tuple(reversed(lids)), tuple(reversed(nodes))


@dataclass
class WeightedPathSet:
    """Candidate paths per flow with per-interval and combined weights."""

    paths: dict[str, list[tuple[str, ...]]]
    per_interval: dict[str, dict[tuple[str, ...], dict[int, float]]]
    combined: dict[str, dict[tuple[str, ...], float]]


def combine_weights(per_interval: Mapping[int, Sequence[tuple[tuple[str, ...], float]]], flow: Flow,
                    intervals: IntervalStructure):
    """Time-weighted mix of a flow's per-interval path weights over its span.

    Returns (candidate paths in first-seen order, per-interval weights, combined weights).
    """
    span = flow.d - flow.r
    order: list[tuple[str, ...]] = []
    table: dict[tuple[str, ...], dict[int, float]] = {}
    lengths = intervals.lengths
    for k in intervals.of_flow(flow):
        for path, w in per_interval.get(k, ()):
            if path not in table:
                table[path] = {}
                order.append(path)
            table[path][k] = table[path].get(k, 0.0) + w
    combined = {p: math.fsum(w * lengths[k] / span for k, w in table[p].items()) for p in order}
    total = math.fsum(combined.values())
    if abs(total - 1.0) > 1e-6:
        raise RuntimeError(f"flow {flow.id}: combined path weights sum to {total}")
    combined = {p: v / total for p, v in combined.items()}
    return order, table, combined


def weighted_paths(solution: FractionalSolution, flows: Sequence[Flow], network: Network,
                   tol: float = RESIDUAL_TOL) -> WeightedPathSet:
    structure = solution.intervals
    per_flow: dict[str, dict[int, list]] = {f.id: {} for f in flows}
    by_id = {f.id: f for f in flows}
    decomposed: dict[tuple[int, str], list] = {}
    for sl in solution.slices:
        for fid in sl.flows:
            key = (id(sl.y), fid)
            if key not in decomposed:
                decomposed[key] = extract_paths(sl.y[fid], by_id[fid], network, tol)
            per_flow[fid][sl.k] = decomposed[key]
    paths, table, combined = {}, {}, {}
    for f in flows:
        paths[f.id], table[f.id], combined[f.id] = combine_weights(per_flow[f.id], f, structure)
    return WeightedPathSet(paths, table, combined)


@dataclass
class RoundedRouting:
    paths: dict[str, tuple[str, ...]]
    seed: object

    def residents(self, flows: Sequence[Flow], structure: IntervalStructure) -> list[dict[str, list[str]]]:
        """Per interval: link -> ids of active flows routed over it."""
        by_id = {f.id: f for f in flows}
        out = []
        for active in structure.active:
            links: dict[str, list[str]] = {}
            for fid in active:
                for lid in self.paths[fid]:
                    links.setdefault(lid, []).append(fid)
            out.append(links)
        return out


def choose_paths(weighted: WeightedPathSet, seed=0, rng: np.random.Generator | None = None) -> RoundedRouting:
    """One independent categorical draw per flow (flows in sorted id order)."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    chosen = {}
    for fid in sorted(weighted.paths):
        cands = weighted.paths[fid]
        probs = np.array([weighted.combined[fid][p] for p in cands])
        cdf = np.cumsum(probs)
        u = rng.random() * cdf[-1]
        idx = int(np.searchsorted(cdf, u, side="right"))
        idx = min(idx, len(cands) - 1)
        while probs[idx] <= 0:
            idx -= 1
        chosen[fid] = cands[idx]
    return RoundedRouting(chosen, seed)


def assign_rates(routing: RoundedRouting, flows: Sequence[Flow], network: Network,
                 structure: IntervalStructure | None = None, atol: float = CAPACITY_ATOL):
    """Pooled per-interval rates: each link runs at the summed density of its resident flows
    and serves them one after another in EDF order.

    Returns (schedule, capacity violations).
    """
    structure = structure or build_intervals(flows)
    by_id = {f.id: f for f in flows}
    cap = network.power.capacity
    hops: dict[str, dict[str, list[Piece]]] = {f.id: {l: [] for l in routing.paths[f.id]} for f in flows}
    violations = []
    for k, ((a, b), links) in enumerate(zip(structure.intervals, routing.residents(flows, structure))):
        length = b - a
        for lid in sorted(links):
            members = edf_order(by_id[fid] for fid in links[lid])
            pooled = math.fsum(f.density for f in members)
            if pooled > cap + atol:
                violations.append((k, lid, pooled))
            t = a
            for i, f in enumerate(members):
                end = b if i == len(members) - 1 else t + length * f.density / pooled
                if end > t:
                    hops[f.id][lid].append(Piece(t, end, pooled))
                t = end
    plans = []
    for f in flows:
        path = routing.paths[f.id]
        per_hop = {l: tuple(_merge(p)) for l, p in hops[f.id].items()}
        plans.append(FlowPlan(f.id, path, per_hop[path[0]], per_hop))
    warnings = tuple(f"link {l}: pooled rate {r:.6g} exceeds capacity in interval {k}" for k, l, r in violations)
    return Schedule(POOLED, tuple(plans), horizon(flows), warnings), violations


def _merge(pieces):
    out = []
    for p in pieces:
        if out and out[-1].end == p.start and out[-1].rate == p.rate:
            out[-1] = Piece(out[-1].start, p.end, p.rate)
        else:
            out.append(p)
    return out


@dataclass
class RsDiagnostics:
    retries: int
    lam: float
    max_density: float
    objectives: list[float]
    seed: object
    violations: list = field(default_factory=list)


def retry_rng(seed: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(attempt)]))


def random_schedule(network: Network, flows: Sequence[Flow], seed: int = 0, max_retries: int = MAX_RETRIES,
                    fractional: FractionalSolution | None = None):
    """Random-Schedule: relax per interval, decompose, mix, draw, pool.

    Returns (schedule, diagnostics). Redraws with seed (seed, t) on a capacity
    violation, up to ``max_retries`` redraws.
    """
    if not flows:
        raise ValueError("need at least one flow")
    structure = fractional.intervals if fractional is not None else build_intervals(flows)
    fractional = fractional or solve_intervals(network, flows, structure)
    weighted = weighted_paths(fractional, flows, network)
    last = []
    for attempt in range(max_retries + 1):
        routing = choose_paths(weighted, seed=(seed, attempt), rng=retry_rng(seed, attempt))
        schedule, violations = assign_rates(routing, flows, network, structure)
        if not violations:
            diag = RsDiagnostics(attempt, structure.lam, max(f.density for f in flows),
                                 fractional.objective(), (seed, attempt))
            return schedule, diag
        last = violations
        log.info("rounding attempt %d violates capacity on %d link-intervals", attempt, len(violations))
    raise RoundingFailed(f"capacity violated after {max_retries} retries", last)
