import csv
import io
import json

import numpy as np
import pytest

from pipewave import cli
from pipewave.netgraph import network_to_dict, paper_network, single_pipe


def run(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out = io.StringIO()
    code = cli.main(argv, out=out)
    return code, out.getvalue()


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_check_default_passes_with_warning(tmp_path, monkeypatch):
    code, out = run(["check", "--set", "discretization.h=0.2"], tmp_path, monkeypatch)
    assert code == 0
    assert "PASS compatibility" in out
    assert "WARN damping: d0 = 0" in out


def test_check_broken_pair_fails(tmp_path, monkeypatch):
    cfg = write(tmp_path, "c.json", {"discretization": {"method": "fem_p1p1", "h": 0.25}})
    code, out = run(["check", cfg], tmp_path, monkeypatch)
    assert code == 1 and "FAIL compatibility" in out


def test_missing_config(tmp_path, monkeypatch, capsys):
    code, _ = run(["steady", "nowhere.json"], tmp_path, monkeypatch)
    assert code == 2
    assert "nowhere.json" in capsys.readouterr().err


@pytest.mark.parametrize("cmd", ["check", "steady", "run", "table1", "reduce"])
def test_config_errors_exit_2(cmd, tmp_path, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run([cmd, str(bad)], tmp_path, monkeypatch)[0] == 2
    assert run([cmd, "--set", "time.dt=0"], tmp_path, monkeypatch)[0] == 2
    assert run([cmd, "--set", "network=missing_net.json"], tmp_path, monkeypatch)[0] == 2
    assert run([cmd, "--set", "damping.family=cubic"], tmp_path, monkeypatch)[0] == 2


def test_usage_error(tmp_path, monkeypatch):
    assert run(["frobnicate"], tmp_path, monkeypatch)[0] == 2
    assert run(["check", "--set", "novalue"], tmp_path, monkeypatch)[0] == 2


def test_steady_single_pipe(tmp_path, monkeypatch):
    net = write(tmp_path, "pipe.json", network_to_dict(single_pipe(2.0, 1.0)))
    cfg = write(tmp_path, "c.json", {"network": net, "damping": {"family": "linear", "beta": 1.0},
                                     "discretization": {"method": "fem", "h": 0.25}})
    code, out = run(["steady", cfg], tmp_path, monkeypatch)
    assert code == 0
    r = rows(out)
    x = np.array([float(v["x"]) for v in r])
    np.testing.assert_allclose([float(v["p"]) for v in r], 2 - x, atol=1e-9)
    np.testing.assert_allclose([float(v["m"]) for v in r], 1.0, atol=1e-9)


@pytest.mark.parametrize("disc", [{"method": "fem", "h": 0.2}, {"method": "spectral", "order": 6}])
def test_steady_junction_continuity(disc, tmp_path, monkeypatch):
    cfg = write(tmp_path, "c.json", {"discretization": disc})
    code, out = run(["steady", cfg, "-o", "s.csv"], tmp_path, monkeypatch)
    assert code == 0
    r = rows((tmp_path / "s.csv").read_text())
    net = paper_network()
    # brute force: collect every edge endpoint sitting on v3
    at_v3 = []
    for e in net.edges:
        pts = [v for v in r if v["edge"] == e.id]
        if e.tail == "v3":
            at_v3.append(float(pts[0]["p"]))
        if e.head == "v3":
            at_v3.append(float(pts[-1]["p"]))
    assert len(at_v3) == 3
    assert max(at_v3) - min(at_v3) < 1e-8


def test_steady_constant_boundary(tmp_path, monkeypatch):
    net = write(tmp_path, "pipe.json", network_to_dict(paper_network().with_ramps(
        {"v1": paper_network().vertex("v6").ramp})))
    code, out = run(["steady", "--set", f"network={net}", "--set", "discretization.h=0.5"], tmp_path, monkeypatch)
    assert code == 0
    assert all(float(v["m"]) == 0.0 for v in rows(out))


def test_run_steady_start(tmp_path, monkeypatch):
    d = network_to_dict(paper_network())
    d["vertices"][0]["boundary"] = {"base": 90.0}
    net = write(tmp_path, "n.json", d)
    code, out = run(["run", "--set", f"network={net}", "--set", "discretization.h=0.5",
                     "--set", "time.t_end=2", "--set", "time.sample_times=[0,1,2]",
                     "--set", "table1.fit_window=[0,2]"], tmp_path, monkeypatch)
    assert code == 0
    r = rows(out)
    assert len(r) == 3 and all(float(v["E_state"]) < 1e-12 for v in r)


def test_run_deterministic(tmp_path, monkeypatch):
    argv = ["run", "--set", "discretization.h=0.5", "--set", "time.t_end=3",
            "--set", "time.sample_times=[0,1,2,3]", "--set", "table1.fit_window=[1,3]"]
    a = run(argv, tmp_path, monkeypatch)
    b = run(argv, tmp_path, monkeypatch)
    assert a == b and a[0] == 0
    assert a[1].splitlines()[0] == "t,E_state,E_deriv"


def test_table1_small(tmp_path, monkeypatch):
    argv = ["table1", "--set", "time.t_end=2", "--set", "time.sample_times=[0,1,2]",
            "--set", "table1.fit_window=[1,2]", "--set", 'table1.rows=[["fem",0.5],["spectral",2]]', "-o", "t.csv"]
    code, out = run(argv, tmp_path, monkeypatch)
    assert code == 0
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "method,param,E0,E1,E2,gamma"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["fem", "spectral"]


REDUCE = ["reduce", "--set", "mor.training_h=0.25", "--set", "time.t_end=4", "--set", "time.sample_times=[0,2,4]",
          "--set", "mor.training_samples=41", "--set", "table1.fit_window=[2,4]"]


def test_reduce_writes_basis_and_appends(tmp_path, monkeypatch):
    code, _ = run(["table1", "--set", "time.t_end=4", "--set", "time.sample_times=[0,2,4]",
                   "--set", "table1.fit_window=[2,4]", "--set", 'table1.rows=[["fem",0.5]]', "-o", "t.csv"],
                  tmp_path, monkeypatch)
    assert code == 0
    code, out = run(REDUCE + ["--set", "mor.n_sv=2", "--set", "mor.basis_path=b.npz", "--evaluate", "-o", "t.csv"],
                    tmp_path, monkeypatch)
    assert code == 0
    assert (tmp_path / "b.npz").is_file()
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[2].startswith("mor,2,")


def test_reduce_rank_error(tmp_path, monkeypatch, capsys):
    code, _ = run(REDUCE + ["--set", "mor.n_sv=500"], tmp_path, monkeypatch)
    assert code == 1
    assert "rank" in capsys.readouterr().err


def test_override_parsing():
    cfg = cli.load_config(None, ["time.dt=0.02", "network=paper", "mor.reduced_quadrature=12", "a.b.c=x"])
    assert cfg["time"]["dt"] == 0.02 and cfg["mor"]["reduced_quadrature"] == 12
    assert cfg["a"]["b"]["c"] == "x"
    with pytest.raises(cli.ConfigError):
        cli.apply_override({"time": 1}, "time.dt=2")
