"""Optimal rate and window assignment for flows on fixed routes.

Works link by link like YDS speed scaling: repeatedly pick the (interval,
link) pair of highest intensity, run its flows at the common scaled speed
under EDF, block out the used time on every link of their paths, repeat.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .model import POOLED, VIRTUAL, Flow, FlowPlan, Network, Piece, Schedule, edf_order, horizon

log = logging.getLogger(__name__)

TIE_RTOL = 1e-12
__all__ = [
    "Availability", "CriticalInterval", "LinkAssignment", "edf_order", "find_critical_interval",
    "intensity", "most_critical_first", "most_critical_first_trace",
]


@dataclass(frozen=True)
class LinkAssignment:
    flows: Mapping[str, Flow]
    paths: Mapping[str, tuple[str, ...]]
    alpha: float
    by_link: Mapping[str, frozenset[str]] = field(default=None)

    def __post_init__(self):
        if self.by_link is None:
            by_link: dict[str, set[str]] = {}
            for fid, path in self.paths.items():
                for lid in path:
                    by_link.setdefault(lid, set()).add(fid)
            object.__setattr__(self, "by_link", {k: frozenset(v) for k, v in by_link.items()})

    @classmethod
    def build(cls, flows: Iterable[Flow], paths: Mapping[str, Sequence[str]], alpha: float):
        flows = {f.id: f for f in flows}
        return cls(flows, {fid: tuple(paths[fid]) for fid in flows}, alpha)

    def virtual_weight(self, fid: str) -> float:
        return self.flows[fid].w * len(self.paths[fid]) ** (1.0 / self.alpha)


class Availability:
    """Per-link sorted, merged list of unavailable closed intervals."""

    def __init__(self):
        self._marks: dict[str, list[tuple[float, float]]] = {}

    def marks(self, link: str) -> list[tuple[float, float]]:
        return self._marks.get(link, [])

    def mark(self, link: str, a: float, b: float) -> None:
        if b <= a:
            return
        merged = sorted(self._marks.get(link, []) + [(a, b)])
        out = [merged[0]]
        for s, e in merged[1:]:
            if s <= out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], e))
            else:
                out.append((s, e))
        self._marks[link] = out

    def unavailable(self, link: str, a: float, b: float) -> float:
        return math.fsum(max(0.0, min(e, b) - max(s, a)) for s, e in self.marks(link) if s < b and e > a)

    def available(self, link: str, a: float, b: float) -> float:
        return max(0.0, (b - a) - self.unavailable(link, a, b))

    def blocked(self, link: str, t: float) -> bool:
        marks = self.marks(link)
        i = bisect.bisect_right(marks, (t, math.inf)) - 1
        return i >= 0 and marks[i][0] <= t < marks[i][1]


@dataclass(frozen=True)
class CriticalInterval:
    a: float
    b: float
    link: str
    flows: tuple[str, ...]
    intensity: float
    available: float

    @property
    def length(self) -> float:
        return self.b - self.a


def intensity(interval, link, assignment: LinkAssignment, availability: Availability,
              remaining: set[str] | None = None) -> float:
    """Virtual work of unscheduled flows on ``link`` whose spans fit in ``interval``,
    per unit of the link's available time there."""
    a, b = interval
    members = [fid for fid in assignment.by_link.get(link, ())
               if (remaining is None or fid in remaining)
               and assignment.flows[fid].r >= a and assignment.flows[fid].d <= b]
    if not members:
        return 0.0
    avail = availability.available(link, a, b)
    if avail <= TIE_RTOL * (b - a):
        return math.inf
    return math.fsum(assignment.virtual_weight(f) for f in members) / avail


def _better(cand, best) -> bool:
    """cand/best are (intensity, length, link, a) tuples; ties prefer shorter, then link id."""
    if best is None:
        return True
    ci, cl, clink, ca = cand
    bi, bl, blink, ba = best
    if math.isinf(ci) or math.isinf(bi):
        if ci != bi:
            return ci > bi
    elif abs(ci - bi) > TIE_RTOL * max(ci, bi):
        return ci > bi
    return (cl, clink, ca) < (bl, blink, ba)


def _best_on_link(link, assignment, availability, remaining) -> CriticalInterval | None:
    members = [assignment.flows[f] for f in assignment.by_link.get(link, ()) if f in remaining]
    if not members:
        return None
    weight = {f.id: assignment.virtual_weight(f.id) for f in members}
    by_deadline = sorted(members, key=lambda f: (f.d, f.id))
    best = None
    best_ci = None
    for a in sorted({f.r for f in members}):
        inside = [f for f in by_deadline if f.r >= a]
        acc = []
        contained = []
        for i, f in enumerate(inside):
            acc.append(weight[f.id])
            contained.append(f.id)
            b = f.d
            # evaluate once all flows sharing this deadline are in
            if i + 1 < len(inside) and inside[i + 1].d == b:
                continue
            avail = availability.available(link, a, b)
            total = math.fsum(acc)
            value = math.inf if avail <= TIE_RTOL * (b - a) else total / avail
            cand = (value, b - a, link, a)
            if _better(cand, best):
                best = cand
                best_ci = CriticalInterval(a, b, link, tuple(sorted(contained)), value, avail)
    return best_ci


def find_critical_interval(assignment: LinkAssignment, availability: Availability,
                           remaining: set[str] | None = None) -> CriticalInterval:
    """Highest-intensity (interval, link) pair over all links with unscheduled flows."""
    if remaining is None:
        remaining = set(assignment.flows)
    best = None
    for link in sorted(assignment.by_link):
        ci = _best_on_link(link, assignment, availability, remaining)
        if ci is not None and _better((ci.intensity, ci.length, ci.link, ci.a),
                                      best and (best.intensity, best.length, best.link, best.a)):
            best = ci
    if best is None or best.intensity == 0:
        raise RuntimeError("no critical interval found while flows remain unscheduled")
    return best


def _place_edf(ci: CriticalInterval, assignment: LinkAssignment, availability: Availability,
               rates: Mapping[str, float]) -> tuple[dict[str, list[Piece]], dict[str, float]]:
    """Preemptive EDF inside the critical interval.

    A flow runs only while the critical link and every other link of its path
    are unmarked. Returns pieces per flow and any transmission time left over.
    """
    flows = [assignment.flows[f] for f in ci.flows]
    links = sorted({l for f in flows for l in assignment.paths[f.id]})
    cuts = {ci.a, ci.b}
    for f in flows:
        cuts.update(t for t in (f.r, f.d) if ci.a < t < ci.b)
    for l in links:
        for s, e in availability.marks(l):
            cuts.update(t for t in (s, e) if ci.a < t < ci.b)
    cuts = sorted(cuts)
    left = {f.id: f.w / rates[f.id] for f in flows}
    pieces: dict[str, list[Piece]] = {f.id: [] for f in flows}
    order = edf_order(flows)
    for u, v in zip(cuts, cuts[1:]):
        mid = 0.5 * (u + v)
        if availability.blocked(ci.link, mid):
            continue
        t = u
        while t < v:
            runnable = [f for f in order
                        if left[f.id] > 0 and f.r <= mid <= f.d
                        and not any(availability.blocked(l, mid) for l in assignment.paths[f.id])]
            if not runnable:
                break
            f = runnable[0]
            dt = min(v - t, left[f.id])
            end = v if dt == v - t else t + dt
            left[f.id] = 0.0 if dt == left[f.id] else left[f.id] - dt
            _append(pieces[f.id], Piece(t, end, rates[f.id]))
            t = end
    return pieces, {k: v for k, v in left.items() if v > TIE_RTOL * ci.length}


def _path_free(availability: Availability, path, a: float, b: float) -> list[tuple[float, float]]:
    """Maximal sub-intervals of [a, b] where no link of ``path`` is marked."""
    marks = sorted(m for l in path for m in availability.marks(l) if m[0] < b and m[1] > a)
    free, t = [], a
    for s, e in marks:
        if s > t:
            free.append((t, min(s, b)))
        t = max(t, e)
        if t >= b:
            break
    if t < b:
        free.append((t, b))
    return [(s, e) for s, e in free if e > s]


def _append(pieces: list[Piece], p: Piece) -> None:
    if pieces and pieces[-1].end == p.start and pieces[-1].rate == p.rate:
        pieces[-1] = Piece(pieces[-1].start, p.end, p.rate)
    else:
        pieces.append(p)


def most_critical_first_trace(network: Network, flows: Sequence[Flow],
                              paths: Mapping[str, Sequence[str]]):
    """Run Most-Critical-First; return the schedule and the extracted critical intervals.

    On paths that share links with differently-timed flows, earlier windows can
    leave a flow too little time inside its critical interval where its whole
    path is free. Such a flow is repaired: it runs at the constant rate that
    fills exactly the path-free time of its span. If no such time is left it
    is overlaid at its density over its span, sharing links concurrently, and
    the schedule switches to pooled mode. Either case adds a warning.
    """
    for f in flows:
        if not network.is_simple_path(paths[f.id], f.p, f.q):
            raise ValueError(f"flow {f.id}: invalid path {list(paths[f.id])}")
    assignment = LinkAssignment.build(flows, paths, network.power.alpha)
    availability = Availability()
    remaining = set(assignment.flows)
    cache: dict[str, CriticalInterval | None] = {}
    dirty = set(assignment.by_link)
    plans: dict[str, list[Piece]] = {}
    rates: dict[str, float] = {}
    extracted: list[CriticalInterval] = []
    warnings: list[str] = []
    overlaid: list[str] = []
    inv_alpha = 1.0 / network.power.alpha

    def repair(fid, why):
        f = assignment.flows[fid]
        free = _path_free(availability, assignment.paths[fid], f.r, f.d)
        room = math.fsum(b - a for a, b in free)
        if room > TIE_RTOL * (f.d - f.r):
            s = f.w / room
            plans[fid] = [Piece(a, b, s) for a, b in free]
            rates[fid] = s
            for lid in assignment.paths[fid]:
                for a, b in free:
                    availability.mark(lid, a, b)
            warnings.append(f"flow {fid}: {why}; rerun at {s:.6g} over the free time of its path")
            return
        plans[fid] = [Piece(f.r, f.d, f.density)]
        rates[fid] = f.density
        overlaid.append(fid)
        warnings.append(f"flow {fid}: {why}; no free time left, overlaid at density over its span")

    while remaining:
        for link in dirty:
            cache[link] = _best_on_link(link, assignment, availability, remaining)
        dirty = set()
        best = None
        for link in sorted(cache):
            ci = cache[link]
            if ci is not None and _better((ci.intensity, ci.length, ci.link, ci.a),
                                          best and (best.intensity, best.length, best.link, best.a)):
                best = ci
        if best is None or best.intensity == 0:
            raise RuntimeError("no critical interval found while flows remain unscheduled")
        extracted.append(best)
        if math.isinf(best.intensity):
            for fid in best.flows:
                repair(fid, f"link {best.link} fully blocked in [{best.a:.6g},{best.b:.6g}]")
                remaining.discard(fid)
                dirty.update(assignment.paths[fid])
            continue
        batch = {fid: best.intensity / len(assignment.paths[fid]) ** inv_alpha for fid in best.flows}
        rates.update(batch)
        pieces, leftover = _place_edf(best, assignment, availability, batch)
        for fid, pcs in pieces.items():
            remaining.discard(fid)
            dirty.update(assignment.paths[fid])
            if fid in leftover:
                continue
            plans[fid] = pcs
            for lid in assignment.paths[fid]:
                for p in pcs:
                    availability.mark(lid, p.start, p.end)
        # repair after the batch is marked so repaired time never collides with it
        for fid in sorted(leftover):
            repair(fid, f"path links blocked inside [{best.a:.6g},{best.b:.6g}]")

    cap = network.power.capacity
    for fid, s in sorted(rates.items()):
        if s > cap:
            warnings.append(f"flow {fid}: rate {s:.6g} exceeds capacity {cap:.6g}")
    for w in warnings:
        log.info(w)
    schedule = Schedule(
        POOLED if overlaid else VIRTUAL,
        tuple(FlowPlan(f.id, tuple(paths[f.id]), tuple(plans[f.id])) for f in flows),
        horizon(flows),
        tuple(warnings),
    )
    return schedule, extracted


def most_critical_first(network: Network, flows: Sequence[Flow],
                        paths: Mapping[str, Sequence[str]]) -> Schedule:
    return most_critical_first_trace(network, flows, paths)[0]


def flow_rates(schedule: Schedule) -> dict[str, float]:
    """The single rate each flow uses (max over pieces; pieces share one rate here)."""
    return {p.flow_id: max((pc.rate for pc in p.pieces), default=0.0) for p in schedule.plans}
