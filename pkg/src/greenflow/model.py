"""Network, flow and schedule types plus energy and feasibility evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

VIRTUAL = "virtual"
POOLED = "pooled"
MODES = (VIRTUAL, POOLED)

VOLUME_RTOL = 1e-9
CAPACITY_ATOL = 1e-9


class DomainError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PowerParams:
    sigma: float
    mu: float
    alpha: float
    capacity: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not self.mu > 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        if not self.alpha > 1:
            raise ConfigError(f"alpha must be > 1, got {self.alpha}")
        if not self.capacity > 0:
            raise ConfigError(f"capacity must be > 0, got {self.capacity}")

    @classmethod
    def half_capacity_sigma(cls, mu: float, alpha: float, capacity: float) -> "PowerParams":
        """Idle power chosen so the power-rate optimum sits at capacity / 2."""
        return cls(mu * (alpha - 1) * (capacity / 2) ** alpha, mu, alpha, capacity)

    def dynamic(self, x: float) -> float:
        return self.mu * x ** self.alpha


def power(x: float, params: PowerParams) -> float:
    """Link power draw at rate ``x``: zero when idle, ``sigma + mu x^alpha`` otherwise."""
    if x < 0 or x > params.capacity:
        raise DomainError(f"rate {x} outside [0, {params.capacity}]")
    if x == 0:
        return 0.0
    return params.sigma + params.mu * x ** params.alpha


@dataclass(frozen=True)
class Link:
    id: str
    u: str
    v: str

    def other(self, node: str) -> str:
        if node == self.u:
            return self.v
        if node == self.v:
            return self.u
        raise KeyError(f"{node} is not an endpoint of link {self.id}")


@dataclass(frozen=True)
class Network:
    """Undirected multigraph with uniform link power parameters.

    ``hosts`` names the nodes that may originate or terminate traffic; it
    defaults to every node.
    """

    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    power: PowerParams
    hosts: tuple[str, ...] = ()

    def __post_init__(self):
        nodes = set(self.nodes)
        if len(nodes) != len(self.nodes):
            raise ConfigError("duplicate node ids")
        seen = set()
        for link in self.links:
            if link.id in seen:
                raise ConfigError(f"duplicate link id {link.id}")
            seen.add(link.id)
            if link.u == link.v:
                raise ConfigError(f"link {link.id} is a self-loop")
            if link.u not in nodes or link.v not in nodes:
                raise ConfigError(f"link {link.id} has an endpoint outside the node set")
        if not self.hosts:
            object.__setattr__(self, "hosts", tuple(self.nodes))
        elif not set(self.hosts) <= nodes:
            raise ConfigError("hosts must be a subset of nodes")
        object.__setattr__(self, "_by_id", {l.id: l for l in self.links})
        adj: dict[str, list[Link]] = {n: [] for n in self.nodes}
        for link in self.links:
            adj[link.u].append(link)
            adj[link.v].append(link)
        object.__setattr__(self, "_adj", adj)

    def link(self, link_id: str) -> Link:
        return self._by_id[link_id]

    def has_link(self, link_id: str) -> bool:
        return link_id in self._by_id

    def incident(self, node: str) -> list[Link]:
        return self._adj[node]

    @property
    def link_ids(self) -> list[str]:
        return [l.id for l in self.links]

    def path_nodes(self, source: str, path: Sequence[str]) -> list[str] | None:
        """Node sequence visited by walking ``path`` from ``source``; None if the links do not chain."""
        nodes = [source]
        for lid in path:
            if lid not in self._by_id:
                return None
            link = self._by_id[lid]
            if nodes[-1] not in (link.u, link.v):
                return None
            nodes.append(link.other(nodes[-1]))
        return nodes

    def is_simple_path(self, path: Sequence[str], source: str, dest: str) -> bool:
        if not path:
            return False
        nodes = self.path_nodes(source, path)
        return nodes is not None and nodes[-1] == dest and len(set(nodes)) == len(nodes)


@dataclass(frozen=True)
class Flow:
    id: str
    w: float
    r: float
    d: float
    p: str
    q: str

    def __post_init__(self):
        if not self.w > 0:
            raise ConfigError(f"flow {self.id}: volume must be positive")
        if not self.r < self.d:
            raise ConfigError(f"flow {self.id}: release must precede deadline")
        if self.p == self.q:
            raise ConfigError(f"flow {self.id}: source equals destination")

    @property
    def span(self) -> tuple[float, float]:
        return (self.r, self.d)

    @property
    def density(self) -> float:
        return self.w / (self.d - self.r)


def horizon(flows: Iterable[Flow]) -> tuple[float, float]:
    # [min release, max deadline]; the model's "T1 = min d" reads as a typo
    flows = list(flows)
    if not flows:
        return (0.0, 0.0)
    return (min(f.r for f in flows), max(f.d for f in flows))


def edf_key(flow: Flow):
    return (flow.d, flow.r, flow.id)


def edf_order(flows: Iterable[Flow]) -> list[Flow]:
    """Earliest deadline first; ties broken by release time, then id."""
    return sorted(flows, key=edf_key)


@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    rate: float

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def volume(self) -> float:
        return self.rate * (self.end - self.start)


@dataclass(frozen=True)
class FlowPlan:
    """Path and rate profile of one flow.

    ``pieces`` is the end-to-end profile. In pooled mode each hop may run at
    its own link rate, so ``hops`` holds a per-link profile that overrides it.
    """

    flow_id: str
    path: tuple[str, ...]
    pieces: tuple[Piece, ...]
    hops: Mapping[str, tuple[Piece, ...]] | None = None

    def on_link(self, link_id: str) -> tuple[Piece, ...]:
        if self.hops is not None and link_id in self.hops:
            return self.hops[link_id]
        return self.pieces

    def rates(self) -> set[float]:
        return {p.rate for p in self.pieces if p.rate > 0}


@dataclass(frozen=True)
class Schedule:
    mode: str
    plans: tuple[FlowPlan, ...]
    horizon: tuple[float, float]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown schedule mode {self.mode!r}")

    def plan(self, flow_id: str) -> FlowPlan:
        for plan in self.plans:
            if plan.flow_id == flow_id:
                return plan
        raise KeyError(flow_id)

    def link_pieces(self) -> dict[str, list[tuple[str, Piece]]]:
        out: dict[str, list[tuple[str, Piece]]] = {}
        for plan in self.plans:
            for lid in plan.path:
                for piece in plan.on_link(lid):
                    out.setdefault(lid, []).append((plan.flow_id, piece))
        return out

    def link_profile(self, link_id: str) -> list[Piece]:
        """Aggregate rate x_e(t) on one link as sorted non-overlapping pieces."""
        return _aggregate([p for _, p in self.link_pieces().get(link_id, [])])

    def active_links(self) -> list[str]:
        return sorted(
            lid for lid, pcs in self.link_pieces().items()
            if any(p.rate > 0 and p.end > p.start for _, p in pcs)
        )


def _aggregate(pieces: Sequence[Piece]) -> list[Piece]:
    pieces = [p for p in pieces if p.end > p.start]
    if not pieces:
        return []
    cuts = sorted({t for p in pieces for t in (p.start, p.end)})
    out = []
    # segment levels are summed from the covering pieces, not a running delta, to avoid drift
    active: list[Piece] = []
    by_start = sorted(pieces, key=lambda p: p.start)
    idx = 0
    for a, b in zip(cuts, cuts[1:]):
        while idx < len(by_start) and by_start[idx].start <= a:
            active.append(by_start[idx])
            idx += 1
        active = [p for p in active if p.end > a]
        level = math.fsum(p.rate for p in active if p.start <= a)
        if level > 0:
            out.append(Piece(a, b, level))
    return out


def dynamic_energy(schedule: Schedule, network: Network) -> float:
    """Integral of mu x_e(t)^alpha over all links."""
    params = network.power
    total = []
    for lid in schedule.link_pieces():
        for p in schedule.link_profile(lid):
            total.append(params.mu * p.rate ** params.alpha * p.length)
    return math.fsum(total)


def schedule_energy(schedule: Schedule, network: Network) -> float:
    """Idle power of every active link over the horizon plus the dynamic energy."""
    active = schedule.active_links()
    if not active:
        return 0.0
    t0, t1 = schedule.horizon
    return (t1 - t0) * len(active) * network.power.sigma + dynamic_energy(schedule, network)


@dataclass
class FeasibilityReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def add(self, msg: str) -> None:
        self.violations.append(msg)


def is_feasible(
    schedule: Schedule,
    flows: Sequence[Flow],
    network: Network,
    volume_rtol: float = VOLUME_RTOL,
    atol: float = CAPACITY_ATOL,
) -> FeasibilityReport:
    """Check volumes, spans, paths, link capacity and (virtual mode) link exclusivity.

    Never raises on a malformed schedule; every problem becomes a violation
    string in the returned report.
    """
    report = FeasibilityReport()
    by_id = {f.id: f for f in flows}
    seen = set()
    for plan in schedule.plans:
        flow = by_id.get(plan.flow_id)
        if flow is None:
            report.add(f"plan for unknown flow {plan.flow_id}")
            continue
        if plan.flow_id in seen:
            report.add(f"flow {plan.flow_id} planned twice")
        seen.add(plan.flow_id)
        if not all(network.has_link(l) for l in plan.path):
            report.add(f"flow {flow.id}: path references unknown link")
            continue
        if not network.is_simple_path(plan.path, flow.p, flow.q):
            report.add(f"flow {flow.id}: path is not a simple {flow.p}->{flow.q} path")
        if plan.hops is not None and set(plan.hops) - set(plan.path):
            report.add(f"flow {flow.id}: hop profile for a link off its path")
        for lid in plan.path:
            _check_hop(report, flow, lid, plan.on_link(lid), volume_rtol, atol)
    for f in flows:
        if f.id not in seen:
            report.add(f"flow {f.id} has no plan")

    cap = network.power.capacity
    for lid, owned in schedule.link_pieces().items():
        if not network.has_link(lid):
            continue
        for p in _aggregate([pc for _, pc in owned]):
            if p.rate > cap + atol:
                report.add(f"link {lid}: rate {p.rate:.6g} exceeds capacity on [{p.start:.6g},{p.end:.6g}]")
                break
        if schedule.mode == VIRTUAL:
            busy = sorted(((pc.start, pc.end, fid) for fid, pc in owned
                           if pc.rate > 0 and pc.end > pc.start))
            for (a0, b0, f0), (a1, b1, f1) in zip(busy, busy[1:]):
                if a1 < b0 - atol and f0 != f1:
                    report.add(f"link {lid}: flows {f0} and {f1} overlap at {a1:.6g}")
                    break
    return report


def _check_hop(report, flow, lid, pieces, volume_rtol, atol):
    vol = []
    ordered = sorted(pieces, key=lambda p: p.start)
    for p in ordered:
        if not (p.end > p.start):
            report.add(f"flow {flow.id} on {lid}: empty or reversed piece [{p.start},{p.end}]")
        if p.rate < 0:
            report.add(f"flow {flow.id} on {lid}: negative rate")
        if p.start < flow.r - atol or p.end > flow.d + atol:
            report.add(f"flow {flow.id} on {lid}: transmits outside span [{flow.r},{flow.d}]")
        vol.append(p.volume)
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end - atol:
            report.add(f"flow {flow.id} on {lid}: overlapping pieces")
            break
    total = math.fsum(vol)
    if abs(total - flow.w) > volume_rtol * flow.w:
        report.add(f"flow {flow.id} on {lid}: moved {total:.12g} of {flow.w:.12g}")
