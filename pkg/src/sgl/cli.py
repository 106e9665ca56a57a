"""Command-line experiment runner.

``sgl <subcommand> --config path [--set key=value ...] [--out dir]``

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 configuration
error, 3 numerical failure (a ``diagnostic.json`` is written).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
import traceback
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, kernels
from .control import battery_to_json, project_control, random_battery
from .expr import ExpressionError
from .experiments import CRITERIA, Artifact, CriterionResult, Suite, run_criterion, stability_control
from .limits import SweepResult, continuation_solve
from .model import ModelError, as_box, validate_model, validate_payoffs
from .pde import PdeSolution, RegionMap, SolverError, export_csv, extract_regions, solve_penalised, vi_residual, \
    write_grid
from .seeds import derive_seed
from .simulate import SimulationError
from .stability import StabilityReport, moment_bound_check, uncontrolled_comparison

__all__ = ["main", "run", "load_config", "apply_overrides", "emit_plotdata", "EXIT_OK", "EXIT_FAIL",
           "EXIT_CONFIG", "EXIT_NUMERIC"]

log = logging.getLogger("sgl")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
BUNDLED = ("acceptance", "quick", "brownian-put", "zero")


class ConfigError(ValueError):
    """The configuration could not be read or is inconsistent."""


# ---------------------------------------------------------------------------
# configuration

def load_config(spec: str) -> dict:
    """Read a JSON config from a path or a bundled name (``acceptance``, ``quick``, ...)."""
    path = Path(spec)
    try:
        if path.exists():
            text = path.read_text()
        elif spec in BUNDLED:
            text = resources.files("sgl").joinpath("configs", f"{spec}.json").read_text()
        else:
            raise ConfigError(f"config {spec!r} not found (bundled: {', '.join(BUNDLED)})")
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible.

    Examples
    --------
    >>> apply_overrides({"grid": {"nx": 161}}, ["grid.nx=81", "seed=3"])
    {'grid': {'nx': 81}, 'seed': 3}
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# plot data

def _slice_table(sol: PdeSolution, n: int) -> str:
    grid = sol.grid
    ax = grid.axis
    U = sol.values[n]
    lines = [f"# value slice t = {sol.times[n]!r}"]
    if grid.d == 1:
        lines.append("# x u")
        lines += [f"{x!r} {u!r}" for x, u in zip(ax.tolist(), U.tolist())]
    else:
        lines.append("# x1 x2 u")
        for i, x1 in enumerate(ax.tolist()):
            lines += [f"{x1!r} {x2!r} {u!r}" for x2, u in zip(ax.tolist(), U[i].tolist())]
            lines.append("")
    return "\n".join(lines) + "\n"


def _region_table(reg: RegionMap, n: int) -> str:
    ax = reg.grid.axis
    L = reg.labels()[n]
    lines = [f"# region labels t = {reg.times[n]!r}; 0 continuation, 1 stop, 2 saturated, 3 both"]
    if reg.grid.d == 1:
        lines.append("# x label")
        lines += [f"{x!r} {int(v)}" for x, v in zip(ax.tolist(), L.tolist())]
    else:
        lines.append("# x1 x2 label")
        for i, x1 in enumerate(ax.tolist()):
            lines += [f"{x1!r} {x2!r} {int(v)}" for x2, v in zip(ax.tolist(), L[i].tolist())]
            lines.append("")
    return "\n".join(lines) + "\n"


def _rate_table(res: SweepResult) -> str:
    lines = [f"# slope {res.slope!r} intercept {res.intercept!r} residual {res.residual!r}",
             "# gamma err"]
    lines += [f"{g!r} {e!r}" for g, e in zip(res.params, res.errors)]
    return "\n".join(lines) + "\n"


def _stability_table(rep: StabilityReport) -> str:
    lines = [f"# K3 {rep.k3!r} E[nu] {rep.nu_mean!r} spread {rep.spread!r}",
             "# gamma measured ci bound"]
    lines += [f"{g!r} {m!r} {c!r} {b!r}" for g, m, c, b in zip(rep.gammas, rep.measured, rep.ci, rep.bound)]
    return "\n".join(lines) + "\n"


def emit_plotdata(obj, kind: str, path, slice_index: int = 0) -> Path:
    """Write a gnuplot-ready whitespace-separated table.

    Parameters
    ----------
    obj : PdeSolution, RegionMap, SweepResult or StabilityReport
    kind : {"slice", "regions", "rate", "stability"}
    path : path-like
        Output file.
    slice_index : int
        Time slice for ``slice`` and ``regions``.
    """
    if kind == "slice":
        text = _slice_table(obj, slice_index)
    elif kind == "regions":
        text = _region_table(obj, slice_index)
    elif kind == "rate":
        text = _rate_table(obj)
    elif kind == "stability":
        text = _stability_table(obj)
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    path = Path(path)
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# output collection

class Collector:
    """Single writer for all artifacts of a run; records every file it writes."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def _record(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.out / name

    def text(self, name: str, content: str) -> None:
        self._record(name).write_text(content)

    def artifact(self, a: Artifact) -> None:
        if a.kind == "csv":
            self.text(a.name, a.payload)
        elif a.kind == "grid":
            write_grid(a.payload, self._record(a.name))
        else:
            emit_plotdata(a.payload, a.kind, self._record(a.name))


# ---------------------------------------------------------------------------
# subcommands: each returns (passed, summary dict)

def _criterion(col: Collector, res: CriterionResult) -> tuple[bool, dict]:
    for a in res.artifacts:
        col.artifact(a)
    print(res.line())
    return res.ok, {"title": res.title, "summary": res.summary, "seconds": res.seconds, "budget": res.budget,
                    "passed": res.passed, "within_budget": res.within_budget}


def cmd_validate(suite: Suite, col: Collector) -> tuple[bool, dict]:
    vcfg = suite.config.get("validate", {})
    box = as_box(vcfg.get("box", suite.grid.m / 2), suite.model.d)
    samples = int(vcfg.get("samples", 200))
    seed = derive_seed(suite.seed, "validate")
    reports = [validate_model(suite.model, box, samples, seed),
               validate_payoffs(suite.payoffs, suite.model, box, samples, seed)]
    lines = ["subject,clause,passed,advisory,worst,detail"]
    for rep in reports:
        for row in rep.rows():
            detail = str(row["detail"]).replace(",", ";")
            lines.append(f"{row['subject']},{row['clause']},{int(row['passed'])},{int(row['advisory'])},"
                         f"{row['worst']!r},{detail}")
    col.text("validation.csv", "\n".join(lines) + "\n")
    ok = all(r.passed for r in reports)
    for rep in reports:
        for c in rep.clauses:
            print(f"[{'PASS' if c.passed else ('WARN' if c.advisory else 'FAIL')}] {rep.subject}.{c.name}: "
                  f"worst {c.worst:.4g} ({c.detail})")
    return ok, {"model": reports[0].passed, "payoffs": reports[1].passed}


def _solve_params(suite: Suite) -> dict:
    s = suite.config.get("solve", {})
    return {"gamma": float(s.get("gamma", 0.0)), "eps": float(s.get("eps", 0.02)),
            "delta": float(s.get("delta", 1e-3))}


def _write_solution(col: Collector, sol: PdeSolution, stem: str) -> None:
    write_grid(sol, col._record(f"{stem}.grid"))
    with open(col._record(f"{stem}_t0.csv"), "w") as fh:
        export_csv(sol, fh, slices=(0,))
    emit_plotdata(sol, "slice", col._record(f"{stem}_t0.dat"))


def cmd_solve(suite: Suite, col: Collector) -> tuple[bool, dict]:
    p = _solve_params(suite)
    sol = solve_penalised(suite.model, suite.payoffs, suite.grid, p["eps"], p["delta"], p["gamma"])
    _write_solution(col, sol, "solution")
    umax = float(np.max(np.abs(sol.values)))
    rmin, rmax, _ = vi_residual(sol)
    col.text("solve.csv", "quantity,value\n" + f"u_max,{umax!r}\nvi_residual_min_form,{rmin!r}\n"
                                               f"vi_residual_max_form,{rmax!r}\n"
                                               f"newton_iterations,{sol.log.get('total_iterations', 0)}\n")
    print(f"[PASS] solve: max|u| = {umax:.6g}; VI residuals (monitored): min-form {rmin:.3g}, max-form {rmax:.3g}")
    return True, {"u_max": umax, "vi_residual_min_form": rmin, "vi_residual_max_form": rmax}


def cmd_continuation(suite: Suite, col: Collector) -> tuple[bool, dict]:
    p = _solve_params(suite)
    sched, tol = suite.continuation_schedule()
    sol = continuation_solve(suite.model, suite.payoffs, suite.grid, p["gamma"], sched, cauchy_tol=tol)
    _write_solution(col, sol, "continuation")
    lines = ["stage,eps,delta,m,cauchy"]
    cauchy = [float("nan")] + list(sol.log["cauchy"])
    for i, ((e, dl, m), c) in enumerate(zip(sol.log["stages"], cauchy)):
        lines.append(f"{i},{e!r},{dl!r},{m!r},{c!r}")
    col.text("continuation.csv", "\n".join(lines) + "\n")
    ok = bool(sol.log["converged"])
    print(f"[{'PASS' if ok else 'FAIL'}] continuation: Cauchy differences {sol.log['cauchy']} (tol {tol:g})")
    return ok, {"cauchy": sol.log["cauchy"], "converged": ok}


def cmd_gamma_sweep(suite: Suite, col: Collector) -> tuple[bool, dict]:
    return _criterion(col, run_criterion(suite, 5))


def cmd_regions(suite: Suite, col: Collector) -> tuple[bool, dict]:
    sol = suite.value_gamma0()
    tol = float(suite.config.get("regions", {}).get("tol", 1e-3))
    reg = extract_regions(sol, tol=tol)
    mask = sol.grid.inner_mask(0.5)
    lines = ["t,stop_fraction,saturated_fraction,overlap_fraction"]
    for n, t in enumerate(reg.times):
        st, sa = reg.stop[n][mask], reg.saturated[n][mask]
        lines.append(f"{t!r},{float(st.mean())!r},{float(sa.mean())!r},{float((st & sa).mean())!r}")
    col.text("regions.csv", "\n".join(lines) + "\n")
    emit_plotdata(reg, "regions", col._record("regions_t0.dat"))
    st0, sa0 = float(reg.stop[0][mask].mean()), float(reg.saturated[0][mask].mean())
    print(f"[PASS] regions: at t = 0, stop {st0:.1%}, saturated {sa0:.1%} of the inner region")
    return True, {"stop_fraction_t0": st0, "saturated_fraction_t0": sa0}


def cmd_crosscheck(suite: Suite, col: Collector) -> tuple[bool, dict]:
    return _criterion(col, run_criterion(suite, 7))


def cmd_stability(suite: Suite, col: Collector) -> tuple[bool, dict]:
    ok, info = _criterion(col, run_criterion(suite, 6))
    model, payoffs, sec = suite.sub_problem("stability")
    horizon = float(sec["horizon"])
    n_small = int(sec.get("n_paths_secondary", 20000))
    dt = float(sec["dt"])
    # Lemma-type comparison with the uncontrolled process, constrained control
    ctrl = stability_control(sec, model.d)
    constrained = project_control(ctrl, model.d0)
    unc = uncontrolled_comparison(model, constrained, sec["x0"], float(sec["stop"]), n_small, dt,
                                  derive_seed(suite.seed, "uncontrolled"))
    col.text("stability_uncontrolled.csv", unc.to_csv())
    # moment bound over a battery of bounded-mass constrained controls
    K2 = float(sec.get("K2", 2.0))
    battery = random_battery(int(sec.get("moment_controls", 5)), model.d, horizon,
                             derive_seed(suite.seed, "moment_battery"), d0=model.d0, total_cap=K2)
    col.text("moment_battery.json", battery_to_json(battery))
    xs = sec.get("moment_x", [sec["x0"]])
    mom = moment_bound_check(model, None, battery, xs, [float(sec["stop"])], n_small, dt,
                             derive_seed(suite.seed, "moment"), K2)
    col.text("stability_moment.csv", mom.to_csv())
    for rep in (unc, mom):
        print(f"[{'PASS' if rep.passed else 'FAIL'}] {rep.name}: {len(rep.rows)} rows, {rep.violations} "
              f"violations; constants {json.dumps(rep.constants)}")
    return ok and unc.passed and mom.passed, {**info, "uncontrolled": unc.passed, "moment": mom.passed}


def cmd_local_time(suite: Suite, col: Collector) -> tuple[bool, dict]:
    return _criterion(col, run_criterion(suite, 8))


def cmd_all(suite: Suite, col: Collector) -> tuple[bool, dict]:
    only = suite.config.get("all", {}).get("criteria", sorted(CRITERIA))
    results = {}
    rows = ["criterion,key,passed"]
    ok = True
    for n in only:
        res = run_criterion(suite, int(n))
        c_ok, info = _criterion(col, res)
        ok &= c_ok
        results[f"{res.number}:{res.key}"] = info
        rows.append(f"{res.number},{res.key},{int(res.passed)}")
    col.text("acceptance.csv", "\n".join(rows) + "\n")
    n_pass = sum(v["passed"] and v["within_budget"] for v in results.values())
    print(f"acceptance: {n_pass}/{len(results)} criteria pass")
    return ok, results


COMMANDS: dict[str, Callable[[Suite, Collector], tuple[bool, dict]]] = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "continuation": cmd_continuation,
    "gamma-sweep": cmd_gamma_sweep,
    "regions": cmd_regions,
    "crosscheck": cmd_crosscheck,
    "stability": cmd_stability,
    "local-time": cmd_local_time,
    "all": cmd_all,
}


# ---------------------------------------------------------------------------
# driver

def run(config: str | dict, subcommand: str, overrides: Sequence[str] = (), out: str | Path = "sgl-out") -> int:
    """Run a subcommand and return the exit code; artifacts go to ``out``."""
    out = Path(out)
    t0 = time.perf_counter()
    try:
        cfg = load_config(config) if isinstance(config, str) else json.loads(json.dumps(config))
        cfg = apply_overrides(cfg, overrides)
        if subcommand not in COMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        suite = Suite(cfg)
    except (ConfigError, ModelError, ExpressionError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    col = Collector(out)
    status, summary = EXIT_OK, {}
    try:
        passed, summary = COMMANDS[subcommand](suite, col)
        status = EXIT_OK if passed else EXIT_FAIL
    except (SolverError, SimulationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        for attr in ("worst_residual", "slice_index", "step"):
            if hasattr(exc, attr):
                diag[attr] = getattr(exc, attr)
        col.text("diagnostic.json", json.dumps(diag, indent=2, default=str) + "\n")
        print(f"numerical failure: {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    except (KeyError, ModelError, ExpressionError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    manifest = {
        "tool": "sgl",
        "version": __version__,
        "backend": kernels.BACKEND,
        "subcommand": subcommand,
        "config_hash": config_hash(cfg),
        "seed": suite.seed,
        "parameters": cfg,
        "outputs": sorted(col.files + ["manifest.json"]),
        "wall_clock_seconds": time.perf_counter() - t0,
        "exit_code": status,
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sgl", description="Stopper vs singular-controller game laboratory.")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", default="acceptance",
                        help="JSON config path or bundled name (%s)" % ", ".join(BUNDLED))
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key, JSON value); repeatable")
    parser.add_argument("--out", default="sgl-out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return run(args.config, args.subcommand, args.overrides, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
