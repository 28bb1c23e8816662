"""JSON instance and schedule files (versioned by a top-level "format" field)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from .model import ConfigError, Flow, FlowPlan, Link, Network, Piece, PowerParams, Schedule

FORMAT = 1


def _check_format(doc: Mapping, what: str) -> None:
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{what}: expected a JSON object")
    if doc.get("format", FORMAT) != FORMAT:
        raise ConfigError(f"{what}: unsupported format {doc.get('format')!r}")


def power_to_dict(p: PowerParams) -> dict:
    return {"sigma": p.sigma, "mu": p.mu, "alpha": p.alpha, "capacity": p.capacity}


def network_to_dict(net: Network) -> dict:
    out = {
        "nodes": list(net.nodes),
        "links": [{"id": l.id, "u": l.u, "v": l.v} for l in net.links],
        "power": power_to_dict(net.power),
    }
    if tuple(net.hosts) != tuple(net.nodes):
        out["hosts"] = list(net.hosts)
    return out


def network_from_dict(doc: Mapping) -> Network:
    try:
        power = PowerParams(**{k: float(doc["power"][k]) for k in ("sigma", "mu", "alpha", "capacity")})
        links = tuple(Link(str(l["id"]), str(l["u"]), str(l["v"])) for l in doc["links"])
        return Network(tuple(str(n) for n in doc["nodes"]), links, power,
                       hosts=tuple(str(h) for h in doc.get("hosts", ())))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed network: missing or bad field {exc}") from None


def flow_to_dict(f: Flow) -> dict:
    return {"id": f.id, "w": f.w, "r": f.r, "d": f.d, "p": f.p, "q": f.q}


def flow_from_dict(doc: Mapping) -> Flow:
    try:
        return Flow(str(doc["id"]), float(doc["w"]), float(doc["r"]), float(doc["d"]), str(doc["p"]), str(doc["q"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed flow: missing or bad field {exc}") from None


def instance_to_dict(net: Network, flows: Sequence[Flow], paths: Mapping[str, Sequence[str]] | None = None) -> dict:
    doc = {"format": FORMAT, "network": network_to_dict(net), "flows": [flow_to_dict(f) for f in flows]}
    if paths is not None:
        doc["paths"] = {fid: list(p) for fid, p in paths.items()}
    return doc


def instance_from_dict(doc: Mapping):
    """Returns (network, flows, paths or None)."""
    _check_format(doc, "instance")
    if "network" not in doc or "flows" not in doc:
        raise ConfigError("instance needs 'network' and 'flows'")
    net = network_from_dict(doc["network"])
    flows = [flow_from_dict(f) for f in doc["flows"]]
    ids = [f.id for f in flows]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate flow ids")
    for f in flows:
        for node in (f.p, f.q):
            if node not in net.hosts:
                raise ConfigError(f"flow {f.id}: endpoint {node} is not a host")
    paths = None
    if "paths" in doc:
        paths = {str(k): tuple(str(l) for l in v) for k, v in doc["paths"].items()}
        for f in flows:
            if f.id not in paths:
                raise ConfigError(f"flow {f.id}: no path given")
            if not net.is_simple_path(paths[f.id], f.p, f.q):
                raise ConfigError(f"flow {f.id}: path {list(paths[f.id])} is not a simple {f.p}-{f.q} path")
    return net, flows, paths


def _pieces(pieces: Sequence[Piece]) -> list[dict]:
    return [{"start": p.start, "end": p.end, "rate": p.rate} for p in pieces]


def _read_pieces(items) -> tuple[Piece, ...]:
    return tuple(Piece(float(p["start"]), float(p["end"]), float(p["rate"])) for p in items)


def schedule_to_dict(s: Schedule) -> dict:
    plans = []
    for plan in s.plans:
        item = {"flow": plan.flow_id, "path": list(plan.path), "pieces": _pieces(plan.pieces)}
        if plan.hops is not None:
            item["hops"] = {lid: _pieces(plan.hops[lid]) for lid in plan.path if lid in plan.hops}
        plans.append(item)
    return {"format": FORMAT, "mode": s.mode, "horizon": list(s.horizon), "plans": plans,
            "warnings": list(s.warnings)}


def schedule_from_dict(doc: Mapping) -> Schedule:
    _check_format(doc, "schedule")
    try:
        plans = []
        for item in doc["plans"]:
            hops = None
            if "hops" in item:
                hops = {str(k): _read_pieces(v) for k, v in item["hops"].items()}
            plans.append(FlowPlan(str(item["flow"]), tuple(str(l) for l in item["path"]),
                                  _read_pieces(item["pieces"]), hops))
        t0, t1 = doc["horizon"]
        return Schedule(doc["mode"], tuple(plans), (float(t0), float(t1)), tuple(doc.get("warnings", ())))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed schedule: {exc}") from None


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def load_instance(path):
    return instance_from_dict(read_json(path))


def load_schedule(path) -> Schedule:
    return schedule_from_dict(read_json(path))


def fractional_to_dict(solution) -> dict:
    """Per-interval routing values, for debugging."""
    return {
        "format": FORMAT,
        "breakpoints": list(solution.intervals.breakpoints),
        "slices": [
            {"k": sl.k, "interval": list(solution.intervals.intervals[sl.k]), "objective": sl.objective,
             "bound": sl.bound, "iterations": sl.iterations,
             "y": {fid: dict(sorted(v.items())) for fid, v in sl.y.items()},
             "paths": {fid: [{"path": list(p), "weight": w} for p, w in v] for fid, v in sl.paths.items()}}
            for sl in solution.slices
        ],
    }
