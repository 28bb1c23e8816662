"""Topology generators and path utilities."""
from __future__ import annotations

import string
from collections import deque
from dataclasses import dataclass

from .model import ConfigError, Link, Network, PowerParams

MAX_HOPS = 8


@dataclass(frozen=True)
class TopologySpec:
    kind: str  # fat-tree | line | parallel-links
    size: int


def fat_tree(k: int, power: PowerParams) -> Network:
    """Three-tier k-ary fat-tree: k pods, (k/2)^2 cores, k^3/4 hosts."""
    if k < 2 or k % 2:
        raise ConfigError(f"fat-tree arity must be a positive even number, got {k}")
    half = k // 2
    hosts, switches, links = [], [], []

    def add(u, v):
        links.append(Link(f"l{len(links):04d}", u, v))

    cores = [f"c{i}_{j}" for i in range(half) for j in range(half)]
    for pod in range(k):
        aggs = [f"a{pod}_{j}" for j in range(half)]
        edges = [f"e{pod}_{j}" for j in range(half)]
        switches += edges + aggs
        for j, edge in enumerate(edges):
            for h in range(half):
                host = f"h{pod}_{j}_{h}"
                hosts.append(host)
                add(host, edge)
        for edge in edges:
            for agg in aggs:
                add(edge, agg)
        for j, agg in enumerate(aggs):
            for c in range(half):
                add(agg, f"c{j}_{c}")
    switches += cores
    return Network(tuple(hosts + switches), tuple(links), power, hosts=tuple(hosts))


def line(n: int, power: PowerParams) -> Network:
    if n < 2:
        raise ConfigError("a line needs at least two nodes")
    names = list(string.ascii_uppercase[:n]) if n <= 26 else [f"n{i:03d}" for i in range(n)]
    links = tuple(Link(f"{a}-{b}", a, b) for a, b in zip(names, names[1:]))
    return Network(tuple(names), links, power)


def parallel_links(m: int, power: PowerParams) -> Network:
    """Two nodes joined by m parallel links (the hardness-proof gadget)."""
    if m < 1:
        raise ConfigError("need at least one link")
    links = tuple(Link(f"L{i:02d}", "src", "dst") for i in range(m))
    return Network(("dst", "src"), links, power, hosts=("src", "dst"))


def generate_topology(spec: TopologySpec, power: PowerParams) -> Network:
    if spec.kind == "fat-tree":
        return fat_tree(spec.size, power)
    if spec.kind == "line":
        return line(spec.size, power)
    if spec.kind == "parallel-links":
        return parallel_links(spec.size, power)
    raise ConfigError(f"unknown topology kind {spec.kind!r}")


class Disconnected(Exception):
    pass


def shortest_path(network: Network, source: str, dest: str) -> tuple[str, ...]:
    """Hop-count shortest path with the lexicographically smallest node sequence.

    Among parallel links between consecutive nodes the smallest link id wins.
    """
    dist = {dest: 0}
    queue = deque([dest])
    while queue:
        u = queue.popleft()
        for link in network.incident(u):
            v = link.other(u)
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    if source not in dist:
        raise Disconnected(f"{dest} unreachable from {source}")
    path = []
    node = source
    while node != dest:
        best = None
        for link in network.incident(node):
            v = link.other(node)
            if dist.get(v) == dist[node] - 1:
                key = (v, link.id)
                if best is None or key < best:
                    best = key
        node = best[0]
        path.append(best[1])
    return tuple(path)


def simple_paths(network: Network, source: str, dest: str, max_hops: int = MAX_HOPS) -> list[tuple[str, ...]]:
    """All simple source-dest paths of at most ``max_hops`` links, as link-id tuples."""
    out = []
    visited = {source}
    stack: list[str] = []

    def walk(node):
        if node == dest:
            out.append(tuple(stack))
            return
        if len(stack) >= max_hops:
            return
        for link in sorted(network.incident(node), key=lambda l: l.id):
            v = link.other(node)
            if v in visited:
                continue
            visited.add(v)
            stack.append(link.id)
            walk(v)
            stack.pop()
            visited.discard(v)

    walk(source)
    return out
