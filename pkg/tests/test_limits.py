import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgl.limits import (continuation_solve, cutoff_xi, fit_rate, gamma_sweep, mollifier_nodes,
                        mollify_truncate, xi, xi_prime)
from sgl.model import brownian, make_payoffs, ornstein_uhlenbeck, validate_payoffs
from sgl.pde import Grid


def test_xi_shape():
    z = np.linspace(-1, 2, 3001)
    v = xi(z)
    assert np.all(v[z <= 0] == 1.0) and np.all(v[z >= 1] == 0.0)
    assert np.all(np.diff(v) <= 0)
    assert xi(0.5) == pytest.approx(0.5)


def test_xi_prime_matches_finite_differences_and_max():
    z = np.linspace(0.01, 0.99, 981)
    h = 1e-6
    fd = (xi(z + h) - xi(z - h)) / (2 * h)
    np.testing.assert_allclose(xi_prime(z), fd, atol=1e-6)
    assert np.max(np.abs(xi_prime(np.linspace(0, 1, 100001)))) == pytest.approx(2.0, abs=1e-6)


@given(st.floats(1, 20), st.floats(0, 60), st.floats(0, 60))
def test_cutoff_nonincreasing_in_radius(k, a, b):
    lo, hi = sorted((a, b))
    assert cutoff_xi(k, np.array([hi, 0.0])) <= cutoff_xi(k, np.array([lo, 0.0]))


@pytest.mark.parametrize("k", [1.0, 5.0, 10.0])
def test_cutoff_gradient_scan(k):
    r = np.linspace(0, 3 * k, 20001)
    v = cutoff_xi(k, r[:, None])
    slope = np.abs(np.diff(v)) / np.diff(r)
    assert slope.max() <= 2.0 / k + 1e-6
    assert v[r <= k].min() == 1.0 and v[r >= 2 * k].max() == 0.0
    with pytest.raises(ValueError):
        cutoff_xi(0.5, r[:, None])


def test_fit_rate():
    slope, intercept, res = fit_rate([(0.4, 0.4), (0.2, 0.2), (0.1, 0.1)])
    assert slope == pytest.approx(1.0) and intercept == pytest.approx(0.0, abs=1e-12)
    assert res == pytest.approx(0.0, abs=1e-12)
    assert fit_rate([(0.4, 0.2), (0.1, 0.1)])[0] == pytest.approx(0.5)
    s, i, _ = fit_rate([(0.4, 0.0), (0.2, 0.0), (0.1, 1e-3)])
    assert s == math.inf and math.isnan(i)
    for bad in ([(0.4, 1.0)], [(0.0, 1.0), (0.1, 1.0)], [(0.4, -1.0), (0.1, 1.0)], [(0.2, 1), (0.2, 2)]):
        with pytest.raises(ValueError):
            fit_rate(bad)


def test_continuation_converges(put1):
    m = brownian(1, sigma=0.3)
    grid = Grid(4.0, 81, 40, 1)
    sched = {"eps": [0.04, 0.02, 0.01], "delta": [0.002, 0.001, 0.0005]}
    sol = continuation_solve(m, put1, grid, 1.0, sched, cauchy_tol=0.05)
    c = sol.log["cauchy"]
    assert len(c) == 2 and c[1] < c[0]
    assert sol.log["converged"]
    assert sol.eps == 0.01 and sol.delta == 0.0005


def test_continuation_with_growing_box(put1):
    m = brownian(1, sigma=0.3)
    sol = continuation_solve(m, put1, Grid(3.0, 61, 20, 1), 1.0,
                             {"eps": [0.04], "delta": [0.002], "m": [3.0, 4.0]}, cauchy_tol=0.1)
    assert sol.grid.m == 4.0
    assert len(sol.log["cauchy"]) == 1


def test_gamma_sweep_argument_checks(ou2, payoffs2):
    g = Grid(7.0, 11, 4, 2)
    with pytest.raises(ValueError):
        gamma_sweep(ou2, payoffs2, g, [0.4, 0.2], {"eps": [0.1], "delta": [0.01]})
    with pytest.raises(ValueError):
        gamma_sweep(ou2, payoffs2, g, [0.2, 0.4, 0.1], {"eps": [0.1], "delta": [0.01]})


def test_gamma_sweep_small():
    m = ornstein_uhlenbeck(d=2, d0=1, theta=0.1, sigma=0.4)
    p = make_payoffs("0.45 - 0.02*t", "0.25*exp(-((x1+2)^2 + x2^2)/0.8)",
                     "0.6*exp(-((x1-0.5)^2 + x2^2)/1.5)", 0.05, 3.0, K=0.5, d=2)
    res = gamma_sweep(m, p, Grid(7.0, 41, 30, 2), [0.4, 0.2, 0.1, 0.05], {"eps": [0.05], "delta": [0.002]})
    assert len(res.errors) == 3
    assert res.errors[0] >= res.errors[1] >= res.errors[2] > 0
    assert res.slope > 0.45
    assert res.to_csv().splitlines()[0] == "param,err"


def test_mollifier_weights():
    nodes, w = mollifier_nodes(4, 2)
    assert w.sum() == pytest.approx(1.0) and np.all(w > 0)
    assert np.all(np.linalg.norm(nodes, axis=1) < 0.25)


@pytest.mark.parametrize("j,k", [(4, 5.0), (8, 10.0)])
def test_mollified_payoffs_keep_gradient_bound(j, k):
    base = make_payoffs("0.45 - 0.02*t", "0.3*max(0, 1 - abs(x1)) + 0.1*min(1, abs(x2))",
                        "0.2*max(0, 1 - abs(x1 - 0.5))", 0.05, 3.0, K1=1.0, K=0.5, d=2)
    m = ornstein_uhlenbeck(d=2, d0=1, theta=0.1, sigma=0.4)
    out = mollify_truncate(base, j, k, 2.0, 2)
    rep = validate_payoffs(out, m, 2 * k + 1, samples=300)
    assert rep.clause("iii_gradient").passed
    t = np.linspace(0, 3, 31)
    assert np.all(out.f(t) >= base.f(t) + 1.0 / j - 1e-12)
    x = np.array([[3 * k, 0.0]])
    assert out.g(0.0, x)[0] == 0.0 and out.h(0.0, x)[0] == 0.0


def test_mollify_argument_checks(put1):
    with pytest.raises(ValueError):
        mollify_truncate(put1, 0, 5, 1.0, 1)
    with pytest.raises(ValueError):
        mollify_truncate(put1, 4, 5, 0.0, 1)
