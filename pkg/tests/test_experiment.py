import csv
import io
import math

import numpy as np
import pytest

from greenflow.experiment import (CSV_COLUMNS, PRESETS, ExperimentConfig, config_from_dict, generate_flows,
                                  ratio_bound, run_experiment, run_instance)
from greenflow.model import ConfigError, Flow, PowerParams
from greenflow.topology import line


def test_generate_flows_basic():
    cfg = ExperimentConfig()
    assert generate_flows(cfg, 1, 0) == []
    a = generate_flows(cfg, 42, 30)
    assert a == generate_flows(cfg, 42, 30)
    assert a != generate_flows(cfg, 43, 30)
    net = cfg.network()
    for f in a:
        assert 1 <= f.r < f.d <= 100 and f.w >= 0.1 and f.p != f.q
        assert f.p in net.hosts and f.q in net.hosts


def test_generate_flows_volume_statistics():
    w = np.array([f.w for f in generate_flows(ExperimentConfig(), 0, 10000)])
    assert abs(w.mean() - 10) <= 0.1
    assert abs(w.std() - 3) <= 0.1


def test_config_validation():
    for bad in ({"repetitions": 0}, {"flow_counts": (0,)}, {"w_std": -1.0}, {"alpha": 1.0}, {"nope": 1}):
        with pytest.raises(ConfigError):
            config_from_dict(bad)
    assert PRESETS["fat-tree-8"].network().hosts.__len__() == 128
    p = PRESETS["half-capacity-sigma"].power
    assert (p.sigma / (p.mu * (p.alpha - 1))) ** (1 / p.alpha) == pytest.approx(p.capacity / 2)


def test_single_flow_on_a_line_all_agree():
    cfg = ExperimentConfig(topology="line", size=3, flow_counts=(1,), repetitions=1)
    net = cfg.network()
    row = run_instance(cfg, net, [Flow("f", 5, 1, 3, "A", "C")], 1, 0, rs_seed=0)
    assert row.lb == pytest.approx(row.rs, rel=1e-6)
    assert row.sp_mcf == pytest.approx(row.rs, rel=1e-6)


def test_two_flow_line_ratios(two_flow_line):
    net, flows, _ = two_flow_line
    cfg = ExperimentConfig(topology="line", size=3, flow_counts=(2,), repetitions=1, capacity=100.0)
    row = run_instance(cfg, net, flows, 2, 0, rs_seed=4)
    assert row.rs_over_lb >= 1 and row.sp_over_lb >= 1


def test_small_sweep_is_deterministic(tmp_path):
    cfg = ExperimentConfig(flow_counts=(6, 12), repetitions=2, seed=3)
    res = run_experiment(cfg, tmp_path / "a.csv", tmp_path / "a.json", tmp_path / "p.json")
    again = run_experiment(cfg, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.DictReader(io.StringIO(res.csv_text())))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 4
    for r in rows:
        lb = float(r["lb"])
        assert lb <= float(r["rs"]) * (1 + 1e-6) and lb <= float(r["sp_mcf"]) * (1 + 1e-6)
    assert not res.failed and not again.failed
    assert set(res.means()) == {6, 12}


def test_parallel_workers_give_identical_rows():
    cfg = ExperimentConfig(flow_counts=(5,), repetitions=2, seed=1)
    serial = run_experiment(cfg).csv_text()
    pooled = run_experiment(config_from_dict({"workers": 2}, cfg)).csv_text()
    assert serial == pooled


def test_failed_rows_are_recorded():
    # capacity below the densest flow: every relaxation is infeasible
    cfg = ExperimentConfig(flow_counts=(4,), repetitions=1, capacity=0.05)
    res = run_experiment(cfg)
    assert len(res.failed) == 1
    line_ = res.csv_text().splitlines()[1].split(",")
    assert line_[4] == ""


def test_ratio_bound():
    assert ratio_bound(2.0, 3, math.e, 2.0) == pytest.approx(4 * 9)
    assert math.isnan(ratio_bound(2.0, 3, 0.5, 2.0))
