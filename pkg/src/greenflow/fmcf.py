"""Fractional multi-commodity flow with convex link cost.

Solved by a block-pairwise Frank-Wolfe method on path columns: each outer
iteration prices a shortest path per commodity under the linearised cost
(adding it as a column and yielding a duality-gap lower bound), then moves
flow from each commodity's most expensive used column to its cheapest one
with an exact line search. Flows may be spread over several "layers" (time
intervals); a commodity restricted to one layer is a plain per-interval MCF.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .model import ConfigError, Flow, Network, PowerParams

log = logging.getLogger(__name__)

RTOL = 1e-7
MAX_ITER = 5000
BARRIER_ONSET = 0.95
MIN_ALPHA = 1.001
METHOD = "pairwise"
LB_RTOL = 1e-3


class FmcfInfeasible(Exception):
    def __init__(self, message, cut=None):
        super().__init__(message)
        self.cut = cut


# --- link cost functions of the link rate x -------------------------------------------------

class PowerCost:
    """mu x^alpha, plus eps times a C^1 barrier that switches on above 95% of capacity."""

    def __init__(self, mu: float, alpha: float, capacity: float = math.inf, eps: float = 0.0):
        self.mu, self.alpha, self.cap, self.eps = mu, alpha, capacity, eps
        self.upper = capacity if eps > 0 else math.inf
        self.x0 = BARRIER_ONSET * capacity
        self.h = capacity - self.x0

    def _over(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.x0, 0.0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        v = self.mu * np.power(x, self.alpha)
        if self.eps:
            on = x > self.x0
            if np.any(on):
                z = np.where(on, x, self.x0)
                v = v + self.eps * np.where(on, 1.0 / (self.cap - z) - 1.0 / self.h - (z - self.x0) / self.h ** 2, 0.0)
        return v

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        g = self.mu * self.alpha * np.power(x, self.alpha - 1)
        if self.eps:
            on = x > self.x0
            if np.any(on):
                z = np.where(on, x, self.x0)
                g = g + self.eps * np.where(on, 1.0 / (self.cap - z) ** 2 - 1.0 / self.h ** 2, 0.0)
        return g

    def g1(self, x: float) -> float:
        x = max(x, 0.0)
        g = self.mu * self.alpha * x ** (self.alpha - 1)
        if self.eps and x > self.x0:
            g += self.eps * (1.0 / (self.cap - x) ** 2 - 1.0 / self.h ** 2)
        return g

    def g2(self, x: float) -> float:
        x = max(x, 1e-300)
        h = self.mu * self.alpha * (self.alpha - 1) * x ** (self.alpha - 2)
        if self.eps and x > self.x0:
            h += 2 * self.eps / (self.cap - x) ** 3
        return h

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        h = self.mu * self.alpha * (self.alpha - 1) * np.power(np.maximum(x, 1e-300), self.alpha - 2)
        if self.eps:
            on = x > self.x0
            if np.any(on):
                z = np.where(on, x, self.x0)
                h = h + self.eps * np.where(on, 2.0 / (self.cap - z) ** 3, 0.0)
        return h


class EnvelopeCost:
    """Largest convex function below the idle+dynamic power curve on [0, C].

    Up to R = min(R_opt, C) it is the chord x f(R)/R. Past R it follows the
    curve when R_opt <= C, otherwise the chord continues.
    """

    def __init__(self, params: PowerParams):
        self.mu, self.alpha, self.sigma = params.mu, params.alpha, params.sigma
        self.upper = math.inf
        self.knee, self.slope = 0.0, 0.0
        if params.sigma > 0:
            ropt = (params.sigma / (params.mu * (params.alpha - 1))) ** (1 / params.alpha)
            r = min(ropt, params.capacity)
            self.knee = r if ropt <= params.capacity else math.inf
            self.slope = (params.sigma + params.mu * r ** params.alpha) / r

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.knee, self.slope * x, self.sigma + self.mu * np.power(x, self.alpha))

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.knee, self.slope, self.mu * self.alpha * np.power(x, self.alpha - 1))

    def d2(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 1e-300)
        return np.where(x <= self.knee, 0.0, self.mu * self.alpha * (self.alpha - 1) * np.power(x, self.alpha - 2))

    def g1(self, x: float) -> float:
        if x <= self.knee:
            return self.slope
        return self.mu * self.alpha * x ** (self.alpha - 1)

    def g2(self, x: float) -> float:
        if x <= self.knee:
            return 0.0
        return self.mu * self.alpha * (self.alpha - 1) * x ** (self.alpha - 2)


class OverloadPenalty:
    """(x - limit)_+^2; zero exactly on capacity-feasible loads."""

    def __init__(self, limit: float):
        self.limit = limit
        self.upper = math.inf

    def value(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.limit, 0.0) ** 2

    def d1(self, x):
        return 2 * np.maximum(np.asarray(x, dtype=float) - self.limit, 0.0)

    def d2(self, x):
        return np.where(np.asarray(x, dtype=float) > self.limit, 2.0, 0.0)

    def g1(self, x: float) -> float:
        return 2 * max(x - self.limit, 0.0)

    def g2(self, x: float) -> float:
        return 2.0 if x > self.limit else 0.0


# --- engine ---------------------------------------------------------------------------------

@dataclass
class Column:
    layer: int
    links: tuple[int, ...]
    nodes: tuple[int, ...]
    flat: tuple[int, ...]
    volume: float = 0.0


@dataclass
class Commodity:
    key: str
    source: int
    dest: int
    volume: float
    layers: list[int]
    columns: list[Column] = field(default_factory=list)
    index: np.ndarray | None = field(default=None, repr=False)  # padded flat ids, rebuilt on column changes


class Engine:
    """Layered multi-commodity flow state over one network.

    Loads and marginal costs live in flat arrays indexed by
    layer * |E| + link, with one extra always-zero pad slot used to pad
    column index rows to equal width.
    """

    def __init__(self, network: Network, lengths: Sequence[float], cost):
        self.network = network
        self.node_ix = {n: i for i, n in enumerate(network.nodes)}
        self.L = np.asarray(lengths, dtype=float)
        self.K = len(self.L)
        self.E = len(network.links)
        self.n = self.K * self.E
        self.pad = self.n
        self.Lf = np.append(np.repeat(self.L, self.E), 1.0)
        self.V = np.zeros(self.n + 1)
        self.c = np.zeros(self.n + 1)
        self.cost = cost
        groups: dict[tuple[int, int], list[int]] = {}
        for j, l in enumerate(network.links):
            a, b = self.node_ix[l.u], self.node_ix[l.v]
            groups.setdefault((min(a, b), max(a, b)), []).append(j)
        self.pairs = sorted(groups)
        self.pair_ix = {p: i for i, p in enumerate(self.pairs)}
        self.pair_links = [sorted(groups[p], key=lambda j: network.links[j].id) for p in self.pairs]
        self.simple = all(len(g) == 1 for g in self.pair_links)
        self.pair_first = np.array([g[0] for g in self.pair_links], dtype=int)
        n = len(network.nodes)
        rows = np.array([a for a, b in self.pairs] + [b for a, b in self.pairs], dtype=int)
        cols = np.array([b for a, b in self.pairs] + [a for a, b in self.pairs], dtype=int)
        order = np.lexsort((cols, rows))
        self._graph = csr_matrix((np.ones(len(rows)), (rows[order], cols[order])), shape=(n, n))
        # csr keeps (row, col) sorted, so stored entry i belongs to pair order[i] mod |pairs|
        self._entry_pair = order % len(self.pairs)
        self.commodities: list[Commodity] = []

    def column(self, layer: int, links, nodes, volume: float = 0.0) -> Column:
        links = tuple(int(j) for j in links)
        base = layer * self.E
        return Column(layer, links, tuple(nodes), tuple(base + j for j in links), volume)

    # loads and costs
    def rates(self) -> np.ndarray:
        return (self.V[:-1] / self.Lf[:-1]).reshape(self.K, self.E)

    def _energy(self, idx) -> float:
        L = self.Lf[idx]
        return float(np.dot(L, self.cost.value(np.maximum(self.V[idx] / L, 0.0))))

    def objective(self) -> float:
        return self._energy(slice(0, self.n))

    def refresh(self) -> np.ndarray:
        self.c[:-1] = self.cost.d1(np.maximum(self.V[:-1] / self.Lf[:-1], 0.0))
        self.c[-1] = 0.0
        return self.c[:-1].reshape(self.K, self.E)

    def add(self, com: Commodity) -> None:
        self.commodities.append(com)

    def rebuild(self) -> None:
        self.V[:] = 0.0
        for com in self.commodities:
            for col in com.columns:
                self.V[list(col.flat)] += col.volume

    # shortest paths
    def _pair_weights(self, c_layer: np.ndarray):
        if self.simple:
            return c_layer[self.pair_first], self.pair_first
        best = np.empty(len(self.pairs), dtype=int)
        for p, g in enumerate(self.pair_links):
            best[p] = g[int(np.argmin(c_layer[g]))]
        return c_layer[best], best

    def shortest(self, c_layer: np.ndarray, sources: Sequence[int], tau: float):
        w, chosen = self._pair_weights(c_layer)
        self._graph.data = w[self._entry_pair] + tau
        dist, pred = dijkstra(self._graph, directed=True, indices=list(sources), return_predecessors=True)
        return dist, pred, chosen

    def path_from(self, pred_row: np.ndarray, chosen: np.ndarray, source: int, dest: int):
        nodes = [dest]
        while nodes[-1] != source:
            nxt = pred_row[nodes[-1]]
            if nxt < 0:
                return None
            nodes.append(int(nxt))
        nodes.reverse()
        links = [int(chosen[self.pair_ix[(min(a, b), max(a, b))]]) for a, b in zip(nodes, nodes[1:])]
        return tuple(nodes), tuple(links)

    def _layout(self, chunk: int = 16):
        """Per block of ``chunk`` layers: the block graph entries and every
        (commodity, layer) membership as row/destination positions."""
        members: dict[int, list[int]] = {}
        for ci, com in enumerate(self.commodities):
            for k in com.layers:
                members.setdefault(k, []).append(ci)
        layers = sorted(members)
        N = len(self.node_ix)
        blocks = []
        for start in range(0, len(layers), chunk):
            ks = layers[start:start + chunk]
            rows_src, ci_list, k_list, dest_list = [], [], [], []
            for j, k in enumerate(ks):
                sources = sorted({self.commodities[ci].source for ci in members[k]})
                srow = {s: len(rows_src) + i for i, s in enumerate(sources)}
                rows_src.extend(j * N + s for s in sources)
                for ci in members[k]:
                    com = self.commodities[ci]
                    ci_list.append(ci)
                    k_list.append(k)
                    dest_list.append((srow[com.source], j * N + com.dest))
            blocks.append((ks, rows_src, np.array(ci_list), np.array(k_list),
                           np.array([d[0] for d in dest_list]), np.array([d[1] for d in dest_list])))
        base = self._graph
        nb = max((len(b[0]) for b in blocks), default=0)
        nnz = base.nnz
        indptr = np.concatenate([[0]] + [base.indptr[1:] + j * nnz for j in range(nb)])
        indices = np.concatenate([base.indices + j * N for j in range(nb)])
        return blocks, indptr, indices

    def price(self, c: np.ndarray, tau: float):
        """Cheapest column per commodity under marginal costs ``c``.

        Returns (columns, linearised cost of routing every commodity on its column).
        """
        if getattr(self, "_blocks", None) is None:
            self._blocks = self._layout()
        blocks, indptr, indices = self._blocks
        N = len(self.node_ix)
        nnz = self._graph.nnz
        all_ci, all_k, all_d, where = [], [], [], []
        preds = {}
        for bi, (ks, rows_src, ci_arr, k_arr, row_arr, dest_arr) in enumerate(blocks):
            data, chosen = [], []
            for k in ks:
                w, ch = self._pair_weights(c[k])
                data.append(w[self._entry_pair] + tau)
                chosen.append(ch)
            m = len(ks)
            g = csr_matrix((np.concatenate(data), indices[:m * nnz], indptr[:m * N + 1]), shape=(m * N, m * N))
            dist, pred = dijkstra(g, directed=True, indices=rows_src, return_predecessors=True)
            preds[bi] = (pred, chosen)
            all_ci.append(ci_arr)
            all_k.append(k_arr)
            all_d.append(dist[row_arr, dest_arr])
            where.append(np.stack([np.full(len(ci_arr), bi), row_arr, dest_arr], axis=1))
        ci_all = np.concatenate(all_ci)
        d_all = np.concatenate(all_d)
        k_all = np.concatenate(all_k)
        w_all = np.concatenate(where)
        order = np.lexsort((k_all, d_all, ci_all))
        first = order[np.unique(ci_all[order], return_index=True)[1]]
        out = {}
        lin = 0.0
        for pos in first.tolist():
            ci = int(ci_all[pos])
            com = self.commodities[ci]
            if not np.isfinite(d_all[pos]):
                raise FmcfInfeasible(f"commodity {com.key}: destination unreachable")
            bi, row, dest = (int(x) for x in w_all[pos])
            pred, chosen = preds[bi]
            j = dest // N
            nodes = [dest]
            while pred[row, nodes[-1]] >= 0:
                nodes.append(int(pred[row, nodes[-1]]))
            nodes = [x - j * N for x in reversed(nodes)]
            ch = chosen[j]
            links = tuple(int(ch[self.pair_ix[(min(a, b), max(a, b))]]) for a, b in zip(nodes, nodes[1:]))
            k = int(k_all[pos])
            lin += com.volume * float(c[k, list(links)].sum())
            out[ci] = self.column(k, links, nodes)
        if len(out) != len(self.commodities):
            raise FmcfInfeasible("a commodity has no admissible layer")
        return out, lin

    # flow moves
    def _index(self, com: Commodity) -> np.ndarray:
        if com.index is None:
            width = max(len(col.flat) for col in com.columns)
            com.index = np.array([col.flat + (self.pad,) * (width - len(col.flat)) for col in com.columns],
                                 dtype=np.intp)
        return com.index

    def _drop_empty(self, com: Commodity) -> None:
        if any(col.volume <= 0 for col in com.columns):
            com.columns = [col for col in com.columns if col.volume > 0]
            com.index = None

    def step(self, com: Commodity, rtol: float) -> bool:
        """Exact line search moving flow from the dearest used column to the cheapest."""
        cols = com.columns
        costs = self.c[self._index(com)].sum(axis=1)
        b = int(np.argmin(costs))
        vols = np.array([col.volume for col in cols])
        masked = np.where(vols > 0, costs, -np.inf)
        w = int(np.argmax(masked))
        if w == b or costs[w] - costs[b] <= rtol * abs(costs[b]) + 1e-300:
            return False
        src, dst = cols[w], cols[b]
        if not self._move(src, dst):
            return False
        if src.volume <= 1e-13 * com.volume:
            rest = src.volume
            self.V[list(src.flat)] -= rest
            self.V[list(dst.flat)] += rest
            dst.volume += rest
            src.volume = 0.0
            self._drop_empty(com)
        return True

    def _move(self, src: Column, dst: Column) -> bool:
        delta: dict[int, int] = {}
        for i in dst.flat:
            delta[i] = delta.get(i, 0) + 1
        for i in src.flat:
            delta[i] = delta.get(i, 0) - 1
        items = [(i, s) for i, s in delta.items() if s]
        if not items:
            return False
        idx = [i for i, _ in items]
        sg = [s for _, s in items]
        V = self.V[idx].tolist()
        L = self.Lf[idx].tolist()
        g1, g2 = self.cost.g1, self.cost.g2
        hi = src.volume
        up = self.cost.upper
        if up != math.inf:
            for v, l, s in zip(V, L, sg):
                if s > 0:
                    hi = min(hi, (up * l - v) / s * (1 - 1e-12))
        if hi <= 0:
            return False

        def slope(t):
            return sum(s * g1((v + s * t) / l) for v, l, s in zip(V, L, sg))

        g0 = slope(0.0)
        if g0 >= 0:
            return False
        if slope(hi) <= 0:
            t = hi
        else:
            # safeguarded Newton from t = 0 on the increasing slope
            lo, up_t, t, g = 0.0, hi, 0.0, g0
            for _ in range(100):
                h = sum(s * s * g2((v + s * t) / l) / l for v, l, s in zip(V, L, sg))
                nt = t - g / h if h > 0 else 0.5 * (lo + up_t)
                if not lo < nt < up_t:
                    nt = 0.5 * (lo + up_t)
                t = nt
                g = slope(t)
                if abs(g) <= 1e-12 * -g0 or up_t - lo <= 1e-15 * hi:
                    break
                if g > 0:
                    up_t = t
                else:
                    lo = t
        if t <= 0:
            return False
        new = [v + s * t for v, s in zip(V, sg)]
        self.V[idx] = new
        self.c[idx] = [g1(v / l) for v, l in zip(new, L)]
        src.volume = max(src.volume - t, 0.0)
        dst.volume += t
        return True

    def project(self, com: Commodity, rtol: float) -> bool:
        """Diagonal-Newton step on the commodity's column simplex.

        Each column's volume moves by (lam - cost_j) / h_j, h_j being the
        column's summed cost curvature, with lam chosen so the total volume
        is unchanged and no volume turns negative. The step is halved until
        the cost drops.
        """
        cols = com.columns
        if len(cols) < 2:
            return False
        I = self._index(com)
        costs = self.c[I].sum(axis=1)
        vols = np.array([col.volume for col in cols])
        cmin = costs.min()
        used = vols > 0
        if costs[used].max() - cmin <= rtol * abs(cmin) + 1e-300:
            return False
        Lr = self.Lf[I]
        h = self.cost.d2(np.maximum(self.V[I] / Lr, 0.0)) / Lr
        h[I == self.pad] = 0.0
        h = h.sum(axis=1)
        if not np.any(h > 0):
            return self.step(com, rtol)
        h = np.maximum(h, 1e-9 * h.max())
        target = _simplex_newton(vols, costs, h, com.volume)
        delta = target - vols
        width = I.shape[1]
        touched = np.unique(I.ravel())
        touched = touched[touched != self.pad]
        before = self.V[touched].copy()
        old = self._energy(touched)
        flat = I.ravel()
        theta = 1.0
        for _ in range(30):
            np.add.at(self.V, flat, np.repeat(theta * delta, width))
            self.V[self.pad] = 0.0
            if self._energy(touched) < old:
                break
            self.V[touched] = before
            theta *= 0.5
        else:
            return False
        self.c[touched] = self.cost.d1(np.maximum(self.V[touched] / self.Lf[touched], 0.0))
        new = vols + theta * delta
        for col, v, t in zip(cols, new.tolist(), target.tolist()):
            col.volume = 0.0 if (t == 0.0 and theta == 1.0) or v <= 0 else v
        self._drop_empty(com)
        return True

    def spread(self) -> float:
        """Worst relative gap, over commodities, between the dearest used column and the cheapest."""
        worst = 0.0
        for com in self.commodities:
            if len(com.columns) < 2:
                continue
            costs = self.c[self._index(com)].sum(axis=1)
            used = np.array([col.volume > 0 for col in com.columns])
            lo = costs.min()
            worst = max(worst, (costs[used].max() - lo) / max(abs(lo), 1e-300))
        return worst

    def solve(self, rtol: float = RTOL, max_iter: int = MAX_ITER, inner: int = 3,
              gap_only: bool = False, method: str = "pairwise"):
        """Price, then sweep moves over all commodities, until the duality gap or the
        relative objective change drops below ``rtol`` and no commodity's used columns
        differ in cost by more than sqrt(rtol) relative. With ``gap_only`` only the
        gap counts.

        Returns (objective, best lower bound, iterations, objective history).
        """
        mover = self.step if method == "pairwise" else self.project
        history = []
        best_bound = -math.inf
        prev = None
        it = 0
        total_volume = sum(com.volume for com in self.commodities)
        for it in range(1, max_iter + 1):
            if it % 25 == 0:
                self.rebuild()
            c = self.refresh()
            tau = 1e-10 * max(float(c.max()) if c.size else 0.0, 1e-12)
            priced, lin = self.price(c, tau)
            F = self.objective()
            used = float(np.dot(self.c[:-1], self.V[:-1]))
            best_bound = max(best_bound, F + lin - used - tau * len(self.node_ix) * total_volume)
            history.append(F)
            added = False
            for ci, col in priced.items():
                com = self.commodities[ci]
                if not any(ex.flat == col.flat and ex.nodes == col.nodes for ex in com.columns):
                    com.columns.append(col)
                    com.index = None
                    added = True
            if gap_only:
                if F - best_bound <= rtol * abs(F):
                    break
            elif ((F - best_bound <= rtol * abs(F) or (prev is not None and not added
                                                       and abs(prev - F) <= rtol * abs(F)))
                  and self.spread() <= math.sqrt(rtol)):
                break
            prev = F
            for com in self.commodities:
                for _ in range(inner):
                    if not mover(com, rtol):
                        break
        self.rebuild()
        return self.objective(), best_bound, it, history


def _simplex_newton(vols, costs, h, total):
    """Volumes max(0, v_j + (lam - c_j)/h_j) summing to ``total``."""
    beta = costs - vols * h  # lam at which column j reaches zero
    order = np.argsort(beta, kind="stable")
    bs, inv = beta[order], 1.0 / h[order]
    num = total + np.cumsum(bs * inv)
    den = np.cumsum(inv)
    lam = num / den
    nxt = np.append(bs[1:], np.inf)
    m = int(np.flatnonzero((lam >= bs) & (lam <= nxt))[0])
    return np.maximum(0.0, (lam[m] - beta) / h)


# --- interval structure ---------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalStructure:
    breakpoints: tuple[float, ...]
    active: tuple[tuple[str, ...], ...]

    @property
    def intervals(self) -> list[tuple[float, float]]:
        return list(zip(self.breakpoints, self.breakpoints[1:]))

    @property
    def K(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(np.asarray(self.breakpoints, dtype=float))

    @property
    def beta(self) -> np.ndarray:
        return self.lengths / (self.breakpoints[-1] - self.breakpoints[0])

    @property
    def lam(self) -> float:
        return (self.breakpoints[-1] - self.breakpoints[0]) / float(self.lengths.min())

    def of_flow(self, flow: Flow) -> list[int]:
        return [k for k, (a, b) in enumerate(self.intervals) if flow.r <= a and b <= flow.d]


def build_intervals(flows: Sequence[Flow]) -> IntervalStructure:
    """Cut time at every release and deadline; record which flows span each piece."""
    if not flows:
        raise ValueError("need at least one flow")
    points = sorted({t for f in flows for t in (f.r, f.d)})
    active = []
    for a, b in zip(points, points[1:]):
        active.append(tuple(f.id for f in flows if f.r <= a and f.d >= b))
    return IntervalStructure(tuple(points), tuple(active))


# --- per-interval F-MCF ---------------------------------------------------------------------

@dataclass
class FractionalSlice:
    """Optimal fractional routing of one interval's active flows at their densities.

    ``y[flow][link]`` is the signed fraction of the flow crossing the link,
    positive in the link's u->v direction.
    """

    k: int
    flows: tuple[str, ...]
    y: dict[str, dict[str, float]]
    x: dict[str, float]
    objective: float
    bound: float
    iterations: int
    history: list[float]
    paths: dict[str, list[tuple[tuple[str, ...], float]]]


@dataclass
class FractionalSolution:
    intervals: IntervalStructure
    slices: list[FractionalSlice]

    def objective(self) -> list[float]:
        return [s.objective for s in self.slices]


def _check_alpha(params: PowerParams):
    if params.alpha < MIN_ALPHA:
        raise ConfigError(f"alpha={params.alpha} too close to 1 for the convex flow solver")


def _commodity(engine: Engine, flow: Flow, layers, volume) -> Commodity:
    return Commodity(flow.id, engine.node_ix[flow.p], engine.node_ix[flow.q], volume, [int(k) for k in layers])


def _min_hop(engine: Engine, com: Commodity):
    dist, pred, chosen = engine.shortest(np.zeros(engine.E), [com.source], 1.0)
    found = engine.path_from(pred[0], chosen, com.source, com.dest)
    if found is None:
        raise FmcfInfeasible(f"flow {com.key}: destination unreachable")
    return found


def _copy_columns(engine: Engine, source: Engine):
    for a, b in zip(engine.commodities, source.commodities):
        a.columns = [engine.column(col.layer, col.links, col.nodes, col.volume)
                     for col in b.columns if col.volume > 0]
    engine.rebuild()


def violated_cut(network: Network, flows: Sequence[Flow]):
    """Look for a node set whose boundary capacity is below the demand that must cross it."""
    import networkx as nx

    cap = network.power.capacity
    g = nx.Graph()
    g.add_nodes_from(network.nodes)
    for l in network.links:
        if g.has_edge(l.u, l.v):
            g[l.u][l.v]["capacity"] += cap
        else:
            g.add_edge(l.u, l.v, capacity=cap)

    def crossing(side):
        return math.fsum(f.density for f in flows if (f.p in side) != (f.q in side))

    candidates = [{n} for n in sorted(network.nodes)]
    for f in flows:
        _, (side, _) = nx.minimum_cut(g, f.p, f.q)
        candidates.append(set(side))
    for side in candidates:
        boundary = math.fsum(d["capacity"] for u, v, d in g.edges(data=True) if (u in side) != (v in side))
        demand = crossing(side)
        if demand > boundary * (1 + 1e-9):
            return {"side": sorted(side), "capacity": boundary, "demand": demand}
    return None


def solve_fmcf(network: Network, flows: Sequence[Flow], k: int = 0, warm=None,
               rtol: float = RTOL, max_iter: int = MAX_ITER) -> FractionalSlice:
    """Route every flow's density fractionally, minimising sum_e mu x_e^alpha with x_e <= C.

    ``warm`` maps flow id to (link path, fraction) pairs used as the starting
    split; flows without one start on a min-hop path.
    """
    params = network.power
    _check_alpha(params)
    if not flows:
        return FractionalSlice(k, (), {}, {}, 0.0, 0.0, 0, [], {})
    cap = params.capacity
    onset = BARRIER_ONSET * cap

    def engine(cost):
        eng = Engine(network, [1.0], cost)
        for f in flows:
            eng.add(_commodity(eng, f, [0], f.density))
        return eng

    probe = engine(OverloadPenalty(onset))
    link_ix = {l.id: j for j, l in enumerate(network.links)}
    for f, com in zip(flows, probe.commodities):
        split = (warm or {}).get(f.id)
        if split:
            for lids, frac in split:
                nodes = network.path_nodes(f.p, lids)
                com.columns.append(probe.column(0, [link_ix[l] for l in lids],
                                                [probe.node_ix[n] for n in nodes], frac * com.volume))
        else:
            nodes, links = _min_hop(probe, com)
            com.columns.append(probe.column(0, links, nodes, com.volume))
    probe.rebuild()
    # phase 1: push every load below the barrier onset, or prove that capacity cannot hold
    if probe.rates().max() >= onset:
        probe.solve(rtol=1e-12, max_iter=500)
        if probe.rates().max() >= onset:
            tight = engine(OverloadPenalty(cap * (1 - 1e-9)))
            _copy_columns(tight, probe)
            tight.solve(rtol=1e-12, max_iter=500)
            if tight.rates().max() >= cap * (1 - 1e-9):
                raise FmcfInfeasible(f"interval {k}: demand cannot be routed within capacity",
                                     violated_cut(network, flows))
            probe = tight

    scale = params.mu * cap ** (params.alpha + 1)
    eps = 1e-3 * scale
    total, history = 0, []
    while True:
        eng = engine(PowerCost(params.mu, params.alpha, cap, eps))
        _copy_columns(eng, probe)
        _, _, iters, hist = eng.solve(rtol=rtol, max_iter=max_iter, method=METHOD)
        total += iters
        history.extend(hist)
        # the barrier only matters while some load sits above the onset
        if eng.rates().max() <= onset or eps <= 1e-12 * scale:
            break
        eps *= 1e-2
        probe = eng
    if eng.rates().max() > cap * (1 + 1e-12):
        raise FmcfInfeasible(f"interval {k}: solver left a link above capacity")
    return _slice(network, eng, flows, k, total, history)


def _slice(network, eng: Engine, flows, k, iters, history) -> FractionalSlice:
    params = network.power
    links = network.links
    y: dict[str, dict[str, float]] = {}
    paths: dict[str, list] = {}
    for f, com in zip(flows, eng.commodities):
        vec: dict[str, float] = {}
        plist = []
        for col in com.columns:
            if col.volume <= 0:
                continue
            frac = col.volume / com.volume
            for a, j in zip(col.nodes, col.links):
                lid = links[j].id
                sign = 1.0 if eng.node_ix[links[j].u] == a else -1.0
                vec[lid] = vec.get(lid, 0.0) + sign * frac
            plist.append((tuple(links[j].id for j in col.links), frac))
        y[f.id] = {l: v for l, v in vec.items() if v != 0.0}
        paths[f.id] = plist
    rates = eng.rates()[0]
    x = {links[j].id: float(rates[j]) for j in range(eng.E) if rates[j] > 0}
    objective = float(np.sum(params.mu * np.power(rates, params.alpha)))
    return FractionalSlice(k, tuple(f.id for f in flows), y, x, objective, objective, iters, history, paths)


def solve_intervals(network: Network, flows: Sequence[Flow], structure: IntervalStructure | None = None,
                    rtol: float = RTOL, max_iter: int = MAX_ITER) -> FractionalSolution:
    """Per-interval F-MCF for every interval, warm-started from the previous interval's split.

    Intervals with the same active flow set share one solve.
    """
    structure = structure or build_intervals(flows)
    by_id = {f.id: f for f in flows}
    cache: dict[tuple[str, ...], FractionalSlice] = {}
    slices = []
    prev = None
    for k, active in enumerate(structure.active):
        if active in cache:
            hit = cache[active]
            slices.append(FractionalSlice(k, hit.flows, hit.y, hit.x, hit.objective, hit.bound, 0, [], hit.paths))
            continue
        warm = {fid: prev.paths[fid] for fid in active if prev is not None and fid in prev.paths}
        sl = solve_fmcf(network, [by_id[f] for f in active], k, warm, rtol, max_iter)
        cache[active] = sl
        slices.append(sl)
        prev = sl
    return FractionalSolution(structure, slices)


def interval_relaxation_energy(solution: FractionalSolution, network: Network, atol: float = 1e-9) -> float:
    """Per-interval relaxed energy: sum_k sum_e (g(x_e(k)) + sigma [x_e(k) > 0]) |I_k|.

    This is the relaxation's objective at density-rate loads; it is not a
    lower bound on the optimum in general (see ``fractional_lower_bound``).
    """
    p = network.power
    lengths = solution.intervals.lengths
    total = []
    for sl, L in zip(solution.slices, lengths):
        for rate in sl.x.values():
            if rate > atol:
                total.append((p.mu * rate ** p.alpha + p.sigma) * L)
    return math.fsum(total)


# --- lower bound ----------------------------------------------------------------------------

@dataclass
class LowerBound:
    value: float
    primal: float
    iterations: int
    history: list[float]


def fractional_lower_bound_detail(network: Network, flows: Sequence[Flow],
                                  structure: IntervalStructure | None = None,
                                  rtol: float = LB_RTOL, max_iter: int = MAX_ITER, inner: int = 1,
                                  start: FractionalSolution | None = None) -> LowerBound:
    """Certified lower bound on the energy of any feasible schedule.

    Relaxation: every flow may split its volume over the intervals of its
    span and over many paths, links may switch off between intervals, and
    the per-link power is replaced by its convex envelope. Within an
    interval a constant link rate is then optimal (Jensen). The value
    returned is the Frank-Wolfe duality bound, which stays below the
    relaxation's optimum even before convergence.

    ``start`` (per-interval routing at densities) seeds the solve; otherwise
    each flow starts at its density on a min-hop path.
    """
    if not flows:
        return LowerBound(0.0, 0.0, 0, [])
    _check_alpha(network.power)
    structure = structure or (start.intervals if start is not None else build_intervals(flows))
    lengths = structure.lengths
    eng = Engine(network, lengths, EnvelopeCost(network.power))
    link_ix = {l.id: j for j, l in enumerate(network.links)}
    hops = {}
    for f in flows:
        com = _commodity(eng, f, structure.of_flow(f), f.w)
        for k in com.layers:
            vol = f.density * float(lengths[k])
            split = start.slices[k].paths.get(f.id) if start is not None else None
            if split:
                for lids, frac in split:
                    nodes = [eng.node_ix[n] for n in network.path_nodes(f.p, lids)]
                    com.columns.append(eng.column(k, [link_ix[l] for l in lids], nodes, frac * vol))
            else:
                if (com.source, com.dest) not in hops:
                    hops[com.source, com.dest] = _min_hop(eng, com)
                nodes, links = hops[com.source, com.dest]
                com.columns.append(eng.column(k, links, nodes, vol))
        eng.add(com)
    eng.rebuild()
    F, bound, iters, hist = eng.solve(rtol=rtol, max_iter=max_iter, inner=inner, gap_only=True,
                                      method="projection")
    return LowerBound(max(bound, 0.0), F, iters, hist)


def fractional_lower_bound(network: Network, flows: Sequence[Flow],
                           structure: IntervalStructure | None = None, **kw) -> float:
    return fractional_lower_bound_detail(network, flows, structure, **kw).value
