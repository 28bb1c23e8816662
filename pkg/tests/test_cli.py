import json

import pytest

from greenflow.cli import EXIT_CONFIG, EXIT_INVALID, EXIT_OK, EXIT_SOLVER, main
from greenflow.io import instance_to_dict, load_instance


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def instance(tmp_path):
    path = tmp_path / "inst.json"
    assert run("gen-flows", "--count", 5, "--seed", 2, "-o", path) == EXIT_OK
    return path


def test_generate_and_schedule(instance, tmp_path):
    for verb in ("dcfsr", "baseline"):
        out = tmp_path / f"{verb}.json"
        assert run(verb, instance, "-o", out) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["format"] == 1 and doc["energy"] > 0
        assert run("validate", instance, out, "-o", tmp_path / "v.json") == EXIT_OK
        assert json.loads((tmp_path / "v.json").read_text())["feasible"]


def test_validate_rejects_broken_schedule(instance, tmp_path):
    out = tmp_path / "s.json"
    run("baseline", instance, "-o", out)
    doc = json.loads(out.read_text())
    doc["plans"][0]["pieces"][0]["rate"] *= 0.5
    doc["plans"][0].pop("hops", None)
    out.write_text(json.dumps(doc))
    assert run("validate", instance, out, "-o", tmp_path / "v.json") == EXIT_INVALID


def test_fixed_route_verbs(two_flow_line, tmp_path, capsys):
    net, flows, paths = two_flow_line
    path = tmp_path / "ex1.json"
    path.write_text(json.dumps(instance_to_dict(net, flows, paths)))
    assert run("dcfs", path) == EXIT_OK
    mcf = json.loads(capsys.readouterr().out)
    assert run("oracle-dcfs", path) == EXIT_OK
    ora = json.loads(capsys.readouterr().out)
    assert mcf["dynamic_energy"] == pytest.approx(ora["objective"], rel=1e-8)
    assert run("oracle-dcfsr", path) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["method"] == "dcfsr-enumeration"
    assert run("lb", path) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["lower_bound"] <= mcf["energy"] * (1 + 1e-6)
    assert run("dcfs", path, "--format", "csv") == EXIT_OK
    assert capsys.readouterr().out.startswith("flow,link,start,end,rate")


def test_errors(instance, tmp_path, capsys):
    assert run("gen-topology", "--size", 3) == EXIT_CONFIG
    assert run("dcfs", instance) == EXIT_CONFIG
    missing = tmp_path / "none.json"
    assert run("baseline", missing) == EXIT_CONFIG
    net, flows, _ = load_instance(instance)
    doc = instance_to_dict(net, flows)
    doc["network"]["power"]["capacity"] = 1e-3
    tight = tmp_path / "tight.json"
    tight.write_text(json.dumps(doc))
    assert run("dcfsr", tight) == EXIT_SOLVER


def test_experiment_verb(tmp_path):
    out, plot = tmp_path / "r.csv", tmp_path / "p.json"
    assert run("experiment", "--flow-counts", 4, "--repetitions", 1, "-o", out, "--plot-data", plot) == EXIT_OK
    assert out.read_text().startswith("n_flows,rep,lb,sp_mcf,rs,rs_over_lb,sp_over_lb\n")
    assert set(json.loads(plot.read_text())["series"]) == {"LB", "SP+MCF", "RS"}


def test_dump_fractional(instance, tmp_path):
    frac = tmp_path / "frac.json"
    assert run("dcfsr", instance, "--dump-fractional", frac, "-o", tmp_path / "s.json") == EXIT_OK
    assert json.loads(frac.read_text())["slices"]
