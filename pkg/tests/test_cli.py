import json
import subprocess
import sys

import numpy as np
import pytest

from sgl.cli import ConfigError, apply_overrides, emit_plotdata, load_config, main, run
from sgl.limits import SweepResult
from sgl.model import brownian, make_payoffs, ornstein_uhlenbeck
from sgl.pde import Grid, extract_regions, read_grid, solve_penalised
from sgl.stability import StabilityReport


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _no_orphans(out):
    listed = set(_manifest(out)["outputs"])
    present = {p.name for p in out.iterdir()}
    assert present == listed


def test_validate_brownian_put(tmp_path, capsys):
    assert run("brownian-put", "validate", out=tmp_path) == 0
    text = (tmp_path / "validation.csv").read_text().splitlines()
    assert text[0] == "subject,clause,passed,advisory,worst,detail"
    assert any(line.startswith("payoffs,iii_gradient,1") for line in text)
    assert "[PASS] model.iii_ellipticity" in capsys.readouterr().out
    _no_orphans(tmp_path)


def test_validate_fails_on_steep_obstacle(tmp_path):
    assert run("brownian-put", "validate", ["payoffs.f=0.5"], out=tmp_path) == 1


def test_solve_zero_game(tmp_path):
    assert run("zero", "solve", out=tmp_path) == 0
    _, vals = read_grid(tmp_path / "solution.grid")
    assert np.max(np.abs(vals)) <= 1e-10
    assert "u_max,0.0" in (tmp_path / "solve.csv").read_text()
    m = _manifest(tmp_path)
    assert m["exit_code"] == 0 and m["subcommand"] == "solve"
    _no_orphans(tmp_path)


def test_continuation_reports_cauchy(tmp_path):
    assert run("brownian-put", "continuation", ["grid.nx=81", "grid.nt=40"], out=tmp_path) == 0
    rows = (tmp_path / "continuation.csv").read_text().splitlines()
    assert rows[0] == "stage,eps,delta,m,cauchy" and len(rows) == 4


def test_gamma_sweep_csv(tmp_path):
    code = run("quick", "gamma-sweep", ["experiments.gamma_rate.gammas=[0.4, 0.2, 0.1, 0.05]"], out=tmp_path)
    assert code == 0
    rows = (tmp_path / "c05_gamma_sweep.csv").read_text().splitlines()
    assert rows[0] == "param,err"
    assert len([r for r in rows[1:] if not r.startswith(("slope", "intercept"))]) == 3
    assert any(r.startswith("slope,") for r in rows)
    dat = (tmp_path / "c05_gamma_rate.dat").read_text().splitlines()
    assert dat[0].startswith("#")


def test_regions_and_stability_commands(tmp_path):
    assert run("quick", "regions", out=tmp_path / "r") == 0
    assert (tmp_path / "r" / "regions_t0.dat").exists()
    assert run("quick", "stability", out=tmp_path / "s") == 0
    assert (tmp_path / "s" / "stability_moment.csv").exists()
    _no_orphans(tmp_path / "s")


def test_config_errors(tmp_path, capsys):
    assert run("no-such-config", "solve", out=tmp_path) == 2
    assert run("quick", "solve", ["grid.nx=abc"], out=tmp_path) == 2
    assert run("quick", "solve", ["model.builtin=heston"], out=tmp_path) == 2
    assert run("quick", "frobnicate", out=tmp_path) == 2
    assert run("quick", "solve", ["payoffs.g=import os"], out=tmp_path) == 2
    assert "config error" in capsys.readouterr().err


def test_numerical_failure_writes_diagnostic(tmp_path):
    code = run("quick", "stability", ['experiments.stability.model.drift=["10*x1*x1*x1", "0"]',
                                      "experiments.stability.dt=0.1", "experiments.stability.x0=[3, 0]"],
               out=tmp_path)
    assert code == 3
    diag = json.loads((tmp_path / "diagnostic.json").read_text())
    assert diag["error"] == "SimulationError"
    assert "diagnostic.json" in _manifest(tmp_path)["outputs"]


def test_all_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("quick", "all", out=a) == 0
    assert run("quick", "all", out=b) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert "acceptance.csv" in csvs and len(csvs) >= 10
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert _manifest(a)["config_hash"] == _manifest(b)["config_hash"]
    _no_orphans(a)


def test_overrides_and_loading(tmp_path):
    cfg = apply_overrides({"a": {"b": 1}}, ["a.c=[1, 2]", "d.e=text", "f=0.5"])
    assert cfg == {"a": {"b": 1, "c": [1, 2]}, "d": {"e": "text"}, "f": 0.5}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({"a": 1}, ["a.b=2"])
    path = tmp_path / "c.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(str(path))
    path.write_text("{bad")
    with pytest.raises(ConfigError):
        load_config(str(path))
    assert load_config("acceptance")["grid"]["nx"] == 161


def test_emit_plotdata_formats(tmp_path):
    p = make_payoffs(1.0, "0.5*exp(-x1^2)", 0.0, 0.0, 1.0)
    sol1 = solve_penalised(brownian(1), p, Grid(2.0, 5, 2, 1), 0.1, 0.01, 1.0)
    rows = emit_plotdata(sol1, "slice", tmp_path / "s1.dat").read_text().splitlines()
    assert len([r for r in rows if r and not r.startswith("#")]) == 5
    assert all(len(r.split()) == 2 for r in rows if r and not r.startswith("#"))

    p2 = make_payoffs(1.0, "0.5*exp(-x1^2-x2^2)", 0.0, 0.0, 1.0, d=2)
    sol2 = solve_penalised(ornstein_uhlenbeck(2, 1), p2, Grid(2.0, 5, 2, 2), 0.1, 0.01, 0.5)
    text = emit_plotdata(sol2, "slice", tmp_path / "s2.dat").read_text()
    blocks = [b for b in text.strip().split("\n\n")]
    assert len(blocks) == 5 and all(len(r.split()) == 3 for b in blocks for r in b.splitlines()
                                    if not r.startswith("#"))
    reg = emit_plotdata(extract_regions(sol2), "regions", tmp_path / "r.dat").read_text()
    labels = {r.split()[2] for r in reg.splitlines() if r.strip() and not r.startswith("#")}
    assert labels <= {"0", "1", "2", "3"}

    sweep = SweepResult([0.4, 0.2], [0.2, 0.1], 1.0, 0.0, 0.0)
    rate = emit_plotdata(sweep, "rate", tmp_path / "rate.dat").read_text().splitlines()
    assert rate[0].startswith("#") and "slope" in rate[0]
    assert [r.split() for r in rate if not r.startswith("#")] == [["0.4", "0.2"], ["0.2", "0.1"]]

    rep = StabilityReport([0.1], [0.01], [0.001], [0.5], 5.0, 1.0, [True], [0.1], 0.0)
    st = emit_plotdata(rep, "stability", tmp_path / "st.dat").read_text().splitlines()
    assert st[-1].split() == ["0.1", "0.01", "0.001", "0.5"]
    with pytest.raises(ValueError):
        emit_plotdata(rep, "pie", tmp_path / "x.dat")


def test_main_entry_point(tmp_path):
    assert main(["solve", "--config", "zero", "--out", str(tmp_path), "--set", "grid.nt=5"]) == 0
    out = subprocess.run([sys.executable, "-m", "sgl.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "gamma-sweep" in out.stdout
