"""Shared fixtures: small models and payoffs that keep unit tests fast."""
from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import settings

from sgl.model import brownian, make_payoffs, ornstein_uhlenbeck
from sgl.pde import Grid

settings.register_profile("sgl", max_examples=40, deadline=None)
settings.load_profile("sgl")


@pytest.fixture
def ou2():
    """Two-dimensional OU model with one controlled coordinate."""
    return ornstein_uhlenbeck(d=2, d0=1, theta=0.1, sigma=0.4)


@pytest.fixture
def bm1():
    return brownian(d=1, sigma=1.0)


@pytest.fixture
def payoffs2():
    """Smooth bumps for g and h with a gentle, decreasing control cost."""
    return make_payoffs(
        f="0.45 - 0.02*t",
        g="0.25*exp(-((x1+2)^2 + x2^2)/0.8)",
        h="0.6*exp(-((x1-0.5)^2 + x2^2)/1.5)",
        r=0.05, T=3.0, K1=1.0, K=0.5, d=2,
    )


@pytest.fixture
def put1():
    """Put payoff on a 1D Brownian model; the slope of g never exceeds f."""
    return make_payoffs(f="1.2 - 0.1*t", g={"builtin": "put", "strike": 1.0}, h=0.0,
                        r=0.05, T=1.0, K1=2.0, beta=0.5, K=1.0, d=1)


@pytest.fixture
def small_grid1():
    return Grid(m=4.0, nx=81, nt=40, d=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criterion lines collected by ``test_acceptance``."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[number])
