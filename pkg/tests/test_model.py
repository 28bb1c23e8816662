import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greenflow.model import (POOLED, VIRTUAL, ConfigError, DomainError, Flow, FlowPlan, Link, Network, Piece,
                             PowerParams, Schedule, dynamic_energy, edf_order, horizon, is_feasible, power,
                             schedule_energy)

from conftest import SQRT2

UNIT = PowerParams(1.0, 1.0, 2.0, 10.0)


def one_link(power=UNIT):
    return Network(("a", "b"), (Link("e", "a", "b"),), power)


def plan(fid, path, *pieces):
    return FlowPlan(fid, tuple(path), tuple(Piece(*p) for p in pieces))


def test_power_values():
    assert power(0, UNIT) == 0
    assert power(2, UNIT) == 5
    assert power(3, PowerParams(0, 2, 3, 10)) == 54


@pytest.mark.parametrize("x", [-1e-9, 10.5])
def test_power_outside_domain(x):
    with pytest.raises(DomainError):
        power(x, UNIT)


@pytest.mark.parametrize("args", [(-1, 1, 2, 1), (0, 0, 2, 1), (0, 1, 1, 1), (0, 1, 2, 0)])
def test_bad_power_params(args):
    with pytest.raises(ConfigError):
        PowerParams(*args)


@pytest.mark.parametrize("w,r,d,p,q", [(0, 0, 1, "a", "b"), (1, 1, 1, "a", "b"), (1, 0, 1, "a", "a")])
def test_bad_flows(w, r, d, p, q):
    with pytest.raises(ConfigError):
        Flow("f", w, r, d, p, q)


@given(st.floats(0, 5), st.floats(0.1, 3), st.floats(1.1, 4), st.floats(1, 50))
def test_power_monotone_and_rate_minimised_at_ropt(sigma, mu, alpha, cap):
    params = PowerParams(sigma, mu, alpha, cap)
    xs = np.linspace(cap / 4000, cap, 4000)
    vals = np.array([power(x, params) for x in xs])
    assert np.all(np.diff(vals) >= -1e-12)
    r_opt = (sigma / (mu * (alpha - 1))) ** (1 / alpha)
    best = xs[np.argmin(vals / xs)]
    target = min(r_opt, cap)
    assert abs(best - max(target, xs[0])) <= 2 * (xs[1] - xs[0])


def test_energy_examples(two_flow_line):
    empty = Schedule(VIRTUAL, (), (0.0, 0.0))
    assert schedule_energy(empty, one_link()) == 0
    assert dynamic_energy(empty, one_link()) == 0
    s = Schedule(VIRTUAL, (plan("f", ["e"], (0, 1, 2)),), (0.0, 1.0))
    assert schedule_energy(s, one_link()) == pytest.approx(5)
    assert dynamic_energy(s, one_link()) == pytest.approx(4)

    net, flows, paths = two_flow_line
    s2 = (8 + 6 * SQRT2) / 3
    s1 = s2 / SQRT2
    t2 = 8 / s2
    sched = Schedule(VIRTUAL, (
        plan("j2", paths["j2"], (1, 1 + t2, s2)),
        plan("j1", paths["j1"], (1 + t2, 4, s1)),
    ), horizon(flows))
    assert is_feasible(sched, flows, net).ok
    assert schedule_energy(sched, net) == pytest.approx((96 * SQRT2 + 136) / 3, rel=1e-12)


def test_feasibility_volume():
    net = one_link()
    flows = [Flow("f", 6, 2, 4, "a", "b")]
    ok = Schedule(VIRTUAL, (plan("f", ["e"], (2, 4, 3)),), (2.0, 4.0))
    short = Schedule(VIRTUAL, (plan("f", ["e"], (2, 4, 2)),), (2.0, 4.0))
    assert is_feasible(ok, flows, net).ok
    assert not is_feasible(short, flows, net).ok


def test_feasibility_catches_each_problem():
    net = one_link()
    f = Flow("f", 2, 0, 2, "a", "b")
    g = Flow("g", 2, 0, 2, "a", "b")
    span = Schedule(VIRTUAL, (plan("f", ["e"], (1, 3, 1)),), (0.0, 2.0))
    assert "outside span" in " ".join(is_feasible(span, [f], net).violations)
    cap = Schedule(VIRTUAL, (plan("f", ["e"], (0, 0.1, 20)),), (0.0, 2.0))
    assert "capacity" in " ".join(is_feasible(cap, [f], net).violations)
    both = (plan("f", ["e"], (0, 2, 1)), plan("g", ["e"], (0, 2, 1)))
    assert "overlap" in " ".join(is_feasible(Schedule(VIRTUAL, both, (0.0, 2.0)), [f, g], net).violations)
    # sharing is fine when the link runs pooled
    assert is_feasible(Schedule(POOLED, both, (0.0, 2.0)), [f, g], net).ok
    missing = Schedule(VIRTUAL, (plan("f", ["e"], (0, 2, 1)),), (0.0, 2.0))
    assert "no plan" in " ".join(is_feasible(missing, [f, g], net).violations)
    bogus = Schedule(VIRTUAL, (plan("f", ["zz"], (0, 2, 1)),), (0.0, 2.0))
    assert not is_feasible(bogus, [f], net).ok


@given(st.floats(0.05, 0.95))
def test_feasibility_invariant_under_piece_split(frac):
    net = one_link()
    flows = [Flow("f", 6, 2, 4, "a", "b")]
    whole = Schedule(VIRTUAL, (plan("f", ["e"], (2, 4, 3)),), (2.0, 4.0))
    cut = 2 + 2 * frac
    split = Schedule(VIRTUAL, (plan("f", ["e"], (2, cut, 3), (cut, 4, 3)),), (2.0, 4.0))
    assert is_feasible(whole, flows, net).ok == is_feasible(split, flows, net).ok
    assert schedule_energy(split, net) == pytest.approx(schedule_energy(whole, net))


pieces = st.lists(st.tuples(st.floats(0, 5), st.floats(0.1, 3), st.floats(0, 8)), min_size=1, max_size=4)


@given(pieces, pieces, st.just(0.0) | st.floats(1e-3, 3))
def test_energy_additive_and_dominates_dynamic(pa, pb, sigma):
    params = PowerParams(sigma, 1.0, 2.0, 100.0)
    net = Network(("a", "b", "c"), (Link("e1", "a", "b"), Link("e2", "b", "c")), params)
    mk = lambda ps: tuple(Piece(s, s + l, r) for s, l, r in ps)
    a = FlowPlan("x", ("e1",), mk(pa))
    b = FlowPlan("y", ("e2",), mk(pb))
    hz = (0.0, 10.0)
    both = Schedule(POOLED, (a, b), hz)
    ea = schedule_energy(Schedule(POOLED, (a,), hz), net)
    eb = schedule_energy(Schedule(POOLED, (b,), hz), net)
    assert schedule_energy(both, net) == pytest.approx(ea + eb, rel=1e-12, abs=1e-12)
    dyn = dynamic_energy(both, net)
    total = schedule_energy(both, net)
    assert total >= dyn - 1e-12
    if sigma == 0 or not both.active_links():
        assert total == pytest.approx(dyn, rel=1e-12, abs=1e-12)
    else:
        assert total > dyn


def test_pooled_energy_uses_aggregate_rate():
    net = one_link(PowerParams(0, 1, 2, 10))
    s = Schedule(POOLED, (plan("f", ["e"], (0, 1, 1)), plan("g", ["e"], (0, 1, 1))), (0.0, 1.0))
    assert dynamic_energy(s, net) == pytest.approx(4)


def test_edf_order():
    fl = [Flow("a", 1, 0, 3, "x", "y"), Flow("b", 1, 0, 1, "x", "y"), Flow("c", 1, 0, 2, "x", "y")]
    assert [f.d for f in edf_order(fl)] == [1, 2, 3]
    tie = [Flow("late", 1, 1, 3, "x", "y"), Flow("early", 1, 0, 3, "x", "y")]
    assert [f.id for f in edf_order(tie)] == ["early", "late"]
    assert edf_order([]) == []


def test_horizon_spans_all_flows():
    fl = [Flow("a", 1, 2, 5, "x", "y"), Flow("b", 1, 1, 3, "x", "y")]
    assert horizon(fl) == (1, 5)


def test_network_validation():
    with pytest.raises(ConfigError):
        Network(("a",), (Link("e", "a", "a"),), UNIT)
    with pytest.raises(ConfigError):
        Network(("a", "b"), (Link("e", "a", "b"), Link("e", "b", "a")), UNIT)
    with pytest.raises(ConfigError):
        Network(("a", "b"), (Link("e", "a", "z"),), UNIT)
