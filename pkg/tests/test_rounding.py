import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greenflow.fmcf import build_intervals, fractional_lower_bound, solve_fmcf, solve_intervals
from greenflow.io import dumps, schedule_to_dict
from greenflow.model import POOLED, Flow, Link, Network, PowerParams, is_feasible, schedule_energy
from greenflow.rounding import (RoundedRouting, RoundingFailed, WeightedPathSet, assign_rates, choose_paths,
                                combine_weights, extract_paths, random_schedule, weighted_paths)
from greenflow.topology import fat_tree, line, parallel_links

from conftest import tiny_instances

P = PowerParams(0, 1, 2, 100)
TRIANGLE = Network(("A", "B", "C"), (Link("ab", "A", "B"), Link("ac", "A", "C"), Link("cb", "C", "B")), P)


def as_dict(paths):
    return {p: pytest.approx(w) for p, w in paths}


def test_extract_single_path():
    f = Flow("f", 1, 0, 1, "A", "C")
    assert extract_paths({"A-B": 1.0, "B-C": 1.0}, f, line(3, P)) == [(("A-B", "B-C"), 1.0)]


def test_extract_parallel_halves():
    f = Flow("f", 1, 0, 1, "src", "dst")
    out = extract_paths({"L00": 0.5, "L01": 0.5}, f, parallel_links(2, P))
    assert dict(out) == as_dict([(("L00",), 0.5), (("L01",), 0.5)])


def test_extract_solved_two_thirds_split():
    f = Flow("f", 1, 0, 1, "A", "B")
    sl = solve_fmcf(TRIANGLE, [f])
    assert dict(extract_paths(sl.y["f"], f, TRIANGLE)) == {("ab",): pytest.approx(2 / 3, rel=1e-6),
                                                           ("ac", "cb"): pytest.approx(1 / 3, rel=1e-6)}


def test_extract_follows_link_direction():
    # C -> A traverses links against their u->v orientation
    f = Flow("f", 1, 0, 1, "C", "A")
    assert extract_paths({"A-B": -1.0, "B-C": -1.0}, f, line(3, P)) == [(("B-C", "A-B"), 1.0)]


def test_extract_broken_flow_raises():
    with pytest.raises(RuntimeError):
        extract_paths({"A-B": 1.0}, Flow("f", 1, 0, 1, "A", "C"), line(3, P))


@given(st.integers(0, 10 ** 6), st.integers(1, 6))
def test_extraction_weights_and_count(seed, n):
    net = fat_tree(4, PowerParams(0, 1, 2, 1e6))
    rng = np.random.default_rng(seed)
    flows = [Flow(f"f{i}", float(rng.uniform(1, 5)), 0, 1, *map(str, rng.choice(net.hosts, 2, replace=False)))
             for i in range(n)]
    sl = solve_fmcf(net, flows)
    for f in flows:
        out = extract_paths(sl.y[f.id], f, net)
        assert math.fsum(w for _, w in out) == pytest.approx(1, abs=1e-12)
        assert len(out) <= len(net.links)
        assert all(net.is_simple_path(p, f.p, f.q) for p, _ in out)
        # the paths form a sub-flow of y (circulations, if any, are dropped)
        rebuilt = {}
        for path, w in out:
            node = f.p
            for lid in path:
                link = net.link(lid)
                rebuilt[lid] = rebuilt.get(lid, 0.0) + (w if link.u == node else -w)
                node = link.other(node)
        for lid, v in rebuilt.items():
            y = sl.y[f.id].get(lid, 0.0)
            assert v * y >= 0 and abs(v) <= abs(y) + 1e-9


def test_combine_weights():
    f = Flow("f", 1, 0, 2, "src", "dst")
    one = build_intervals([f])
    assert combine_weights({0: [(("a",), 1.0)]}, f, one)[2] == {("a",): 1.0}
    two = build_intervals([f, Flow("g", 1, 1, 2, "src", "dst")])
    order, table, combined = combine_weights({0: [(("a",), 1.0)], 1: [(("b",), 1.0)]}, f, two)
    assert order == [("a",), ("b",)]
    assert combined == {("a",): pytest.approx(0.5), ("b",): pytest.approx(0.5)}


def test_combine_two_flow_line(two_flow_line):
    net, flows, _ = two_flow_line
    ws = weighted_paths(solve_intervals(net, flows), flows, net)
    assert ws.per_interval["j1"][("A-B", "B-C")] == {1: pytest.approx(1), 2: pytest.approx(1)}
    assert ws.combined["j1"] == {("A-B", "B-C"): pytest.approx(1)}


def single(weights):
    paths = [(f"p{i}",) for i in range(len(weights))]
    return WeightedPathSet({"f": paths}, {}, {"f": dict(zip(paths, weights))})


def test_choose_paths_degenerate():
    assert choose_paths(single([1.0]), seed=3).paths["f"] == ("p0",)
    for seed in range(50):
        assert choose_paths(single([1.0, 0.0]), seed=seed).paths["f"] == ("p0",)
        assert choose_paths(single([0.0, 1.0]), seed=seed).paths["f"] == ("p1",)


def test_choose_paths_frequency():
    rng = np.random.default_rng(7)
    ws = single([0.5, 0.5])
    hits = sum(choose_paths(ws, rng=rng).paths["f"] == ("p0",) for _ in range(10000))
    assert abs(hits / 10000 - 0.5) <= 0.02


def test_choose_paths_unbiased_link_presence():
    ws = single([0.2, 0.3, 0.5])
    rng = np.random.default_rng(11)
    counts = {p: 0 for p in ws.paths["f"]}
    for _ in range(20000):
        counts[choose_paths(ws, rng=rng).paths["f"]] += 1
    for p, w in ws.combined["f"].items():
        assert abs(counts[p] / 20000 - w) <= 0.015


def test_assign_rates_pool_of_one_and_two():
    net = line(2, P)
    f = Flow("f", 4, 0, 2, "A", "B")
    sched, viol = assign_rates(RoundedRouting({"f": ("A-B",)}, 0), [f], net)
    assert not viol and sched.mode == POOLED
    assert [(p.start, p.end, p.rate) for p in sched.plan("f").pieces] == [(0, 2, 2)]

    fl = [Flow("a", 2, 0, 2, "A", "B"), Flow("b", 2, 0, 2, "A", "B")]
    sched, _ = assign_rates(RoundedRouting({"a": ("A-B",), "b": ("A-B",)}, 0), fl, net)
    for fid in "ab":
        (piece,) = sched.plan(fid).pieces
        assert piece.rate == 2 and piece.length == 1
    assert is_feasible(sched, fl, net).ok


def test_assign_rates_reports_capacity_violation():
    net = line(2, PowerParams(0, 1, 2, 3))
    fl = [Flow("a", 4, 0, 2, "A", "B"), Flow("b", 4, 0, 2, "A", "B")]
    _, viol = assign_rates(RoundedRouting({"a": ("A-B",), "b": ("A-B",)}, 0), fl, net)
    assert viol and viol[0][1] == "A-B"


def test_random_schedule_single_flow():
    net = parallel_links(3, P)
    f = Flow("f", 6, 0, 3, "src", "dst")
    sched, diag = random_schedule(net, [f], seed=1)
    (piece,) = sched.plan("f").pieces
    assert piece.rate == pytest.approx(2) and diag.retries == 0


def test_random_schedule_two_flow_line_all_seeds(two_flow_line):
    net, flows, _ = two_flow_line
    frac = solve_intervals(net, flows)
    lb = fractional_lower_bound(net, flows, rtol=1e-8)
    for seed in range(100):
        sched, _ = random_schedule(net, flows, seed=seed, fractional=frac)
        assert is_feasible(sched, flows, net).ok
        assert schedule_energy(sched, net) >= lb * (1 - 1e-6)


def test_gadget_partitions():
    # four unit-time flows of 2 on two links, idle power puts the sweet spot at rate 4
    B, alpha = 4.0, 2.0
    net = parallel_links(2, PowerParams((alpha - 1) * B ** alpha, 1, alpha, 8))
    flows = [Flow(f"f{i}", 2, 0, 1, "src", "dst") for i in range(4)]
    best = min(schedule_energy(random_schedule(net, flows, seed=s)[0], net) for s in range(30))
    assert best == pytest.approx(2 * alpha * B ** alpha)


def test_retries_exhausted():
    # pooled densities 1.5 + 1.5 overload a capacity-2 link whichever path is drawn
    net = parallel_links(1, PowerParams(0, 1, 2, 2.0))
    flows = [Flow("a", 1.5, 0, 1, "src", "dst"), Flow("b", 1.5, 0, 1, "src", "dst")]
    frac = solve_intervals(parallel_links(1, PowerParams(0, 1, 2, 10.0)), flows)
    with pytest.raises(RoundingFailed) as err:
        random_schedule(net, flows, seed=0, max_retries=3, fractional=frac)
    assert err.value.violations


@given(tiny_instances(kinds=("line", "parallel"), alphas=(2.0, 3.0)), st.integers(0, 1000))
def test_deadlines_drain_and_lower_bound(inst, seed):
    net, flows, _ = inst
    sched, diag = random_schedule(net, flows, seed=seed)
    assert is_feasible(sched, flows, net).ok
    structure = build_intervals(flows)
    # on every link and interval the pooled rate serves exactly sum D_i |I_k|
    for k, (a, b) in enumerate(structure.intervals):
        for lid in net.link_ids:
            want = sum(f.density * (b - a) for f in flows
                       if f.id in structure.active[k] and lid in sched.plan(f.id).path)
            got = sum(max(0.0, min(p.end, b) - max(p.start, a)) * p.rate
                      for plan in sched.plans if lid in plan.path for p in plan.on_link(lid))
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)
    assert schedule_energy(sched, net) >= fractional_lower_bound(net, flows, rtol=1e-6) * (1 - 1e-6)


def test_deterministic_json():
    net = fat_tree(4, PowerParams(0, 1, 2, 1e6))
    rng = np.random.default_rng(5)
    flows = [Flow(f"f{i}", float(rng.uniform(1, 9)), float(i), float(i + 3),
                  *map(str, rng.choice(net.hosts, 2, replace=False))) for i in range(6)]
    a = dumps(schedule_to_dict(random_schedule(net, flows, seed=9)[0]))
    b = dumps(schedule_to_dict(random_schedule(net, flows, seed=9)[0]))
    assert a == b
