"""Acceptance suite on the bundled desk-scale configuration.

``sgl all --config acceptance`` is run once per session; each criterion is a
separate test that reads its outcome (pass flag, runtime against its budget,
summary) from the run manifest.  The determinism criterion repeats the run and
compares every CSV byte for byte.  One ``[PASS]``/``[FAIL]`` line per
criterion is printed in the terminal summary.

``SGL_ACCEPTANCE_CONFIG`` selects another config (e.g. ``quick`` for a fast
dry run of the harness).
"""
from __future__ import annotations

import json
import os

import pytest

from sgl.cli import run
from sgl.experiments import CRITERIA

pytestmark = pytest.mark.slow

CONFIG = os.environ.get("SGL_ACCEPTANCE_CONFIG", "acceptance")

LINES: dict[int, str] = {}


def _record(number: int, title: str, passed: bool, summary: str) -> None:
    LINES[number] = f"[{'PASS' if passed else 'FAIL'}] #{number:<2} {title}: {summary}"


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_a")
    code = run(CONFIG, "all", out=out)
    manifest = json.loads((out / "manifest.json").read_text())
    by_number = {int(k.split(":")[0]): v for k, v in manifest["summary"].items()}
    return out, code, by_number


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(first_run, number):
    _, _, results = first_run
    info = results[number]
    title = info["title"]
    ok = info["passed"] and info["within_budget"]
    timing = f" [{info['seconds']:.0f} s of {info['budget']:.0f} s]"
    _record(number, title, ok, info["summary"] + timing)
    assert info["passed"], info["summary"]
    assert info["within_budget"], f"{info['seconds']:.1f} s exceeds the {info['budget']} s budget"


def test_all_exit_code(first_run):
    _, code, results = first_run
    assert code == 0
    assert sorted(results) == sorted(CRITERIA)


def test_determinism(first_run, tmp_path_factory):
    out_a = first_run[0]
    out_b = tmp_path_factory.mktemp("acceptance_b")
    run(CONFIG, "all", out=out_b)
    names = sorted(p.name for p in out_a.glob("*.csv"))
    differing = [n for n in names if (out_a / n).read_bytes() != (out_b / n).read_bytes()]
    missing = sorted({p.name for p in out_b.glob("*.csv")} ^ set(names))
    ok = not differing and not missing
    _record(11, "determinism", ok, f"{len(names)} CSV files compared, {len(differing)} differ"
            + (f" ({', '.join(differing)})" if differing else ""))
    assert ok, (differing, missing)
