import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgl.control import Atom, ControlPath, Segment, null_control, nu_total, random_battery
from sgl.model import brownian, make_payoffs
from sgl.payoff_mc import (StopRule, contact, crosscheck_optimality, estimate_value, fixed_time,
                           payoff_one_path, realize_theta_star, theta_star_indices)
from sgl.reference import feynman_kac_constant
from sgl.simulate import euler_controlled, simulate_ensemble


def test_payoff_by_hand():
    m = brownian(1, sigma=0.0)
    p = make_payoffs(f=2.0, g="x1", h=1.0, r=0.0, T=1.0)
    ctrl = ControlPath(1.0, 1, atoms=[Atom(0.0, (1.0,), 0.5)])
    path = euler_controlled(m, ctrl, [0.0], 1.0, 0.01, seed=0)
    assert payoff_one_path(path, ctrl, 1.0, p) == pytest.approx(0.5 + 1.0 + 2 * 0.5, abs=1e-12)
    assert payoff_one_path(path, ctrl, 0.0, p) == pytest.approx(0.5 + 2 * 0.5, abs=1e-12)
    with pytest.raises(ValueError):
        payoff_one_path(path, ctrl, 0.005, p)


def test_discounting_by_hand():
    m = brownian(1, sigma=0.0)
    p = make_payoffs(f=1.0, g=0.0, h=0.0, r=0.5, T=1.0)
    ctrl = ControlPath(1.0, 1, atoms=[Atom(0.5, (1.0,), 2.0)])
    path = euler_controlled(m, ctrl, [0.0], 1.0, 0.01, seed=0)
    assert payoff_one_path(path, ctrl, 1.0, p) == pytest.approx(2.0 * np.exp(-0.25))


@given(st.floats(0.1, 2), st.floats(0, 3), st.integers(0, 1000))
def test_payoff_monotone_in_f(f0, bump, seed):
    m = brownian(2, d0=1)
    ctrl = random_battery(1, 2, 1.0, seed=seed, d0=1)[0]
    path = euler_controlled(m, ctrl, [0.0, 0.0], 1.0, 0.05, seed)
    lo = make_payoffs(f0, "x1^2", 1.0, 0.1, 1.0, d=2)
    hi = make_payoffs(f0 + bump, "x1^2", 1.0, 0.1, 1.0, d=2)
    assert payoff_one_path(path, ctrl, 0.5, hi) >= payoff_one_path(path, ctrl, 0.5, lo)


@given(st.floats(0, 1), st.integers(0, 1000))
def test_relaxed_cost_bound(gamma, seed):
    m = brownian(2, d0=1)
    p = make_payoffs("1 - 0.1*t", "x1^2", 1.0, 0.1, 1.0, K=0.7, d=2)
    ctrl = random_battery(1, 2, 1.0, seed=seed)[0]
    path = euler_controlled(m, ctrl, [0.0, 0.0], gamma, 0.05, seed)
    diff = payoff_one_path(path, ctrl, 1.0, p, f_variant=gamma, gamma=gamma, d0=1) \
        - payoff_one_path(path, ctrl, 1.0, p, gamma=gamma, d0=1)
    assert -1e-12 <= diff <= np.sqrt(gamma) * 0.7 * nu_total(ctrl, 1.0) + 1e-12


def test_theta_star_zero_when_value_is_obstacle():
    m = brownian(1)
    p = make_payoffs(1.0, "x1^2", 0.0, 0.0, 1.0)
    ens = simulate_ensemble(m, null_control(1.0, 1), [0.3], 1.0, 0.01, 2, 50)
    idx = theta_star_indices(lambda t, x: p.g(t, x), p, ens, 0.0, 1e-9)
    assert np.all(idx == 0)


def test_theta_star_bounded_by_horizon():
    m = brownian(1)
    p = make_payoffs(1.0, 0.0, 0.0, 0.0, 1.0)
    path = euler_controlled(m, null_control(0.6, 1), [0.0], 1.0, 0.01, 2)
    far = lambda t, x: np.full(np.shape(x)[:-1], 5.0)  # noqa: E731
    assert realize_theta_star(far, p, path, 0.4, 1e-3) == pytest.approx(0.6)


def test_theta_star_sees_left_limits():
    """A jump out of the contact set must still stop at the jump time."""
    m = brownian(1, sigma=0.0)
    p = make_payoffs(1.0, 0.0, 0.0, 0.0, 1.0)
    ctrl = ControlPath(1.0, 1, atoms=[Atom(0.5, (1.0,), 1.0)])
    path = euler_controlled(m, ctrl, [0.0], 1.0, 0.1, 0)
    v = lambda t, x: np.asarray(x)[..., 0]  # noqa: E731  zero gap only at x = 0
    assert realize_theta_star(v, p, path, 0.0, 1e-9) == 0.0
    # x = 0.5 on [0, 0.5), jumps to -0.5 at 0.5; contact only allowed from t = 0.45 on
    ctrl2 = ControlPath(1.0, 1, atoms=[Atom(0.0, (1.0,), 0.5), Atom(0.5, (-1.0,), 1.0)])
    path2 = euler_controlled(m, ctrl2, [0.0], 1.0, 0.1, 0)
    v3 = lambda t, x: np.abs(np.asarray(x)[..., 0] - 0.5) + (t < 0.45) * 1.0  # noqa: E731
    assert realize_theta_star(v3, p, path2, 0.0, 1e-3) == pytest.approx(0.5)


def test_feynman_kac_by_monte_carlo():
    m = brownian(1)
    p = make_payoffs(1e6, 0.0, 1.0, 0.1, 1.0)
    mean, ci = estimate_value(m, p, null_control(1.0, 1), fixed_time(1.0), 0.0, [0.0], 1.0, 200, 1e-3, 1)
    assert ci < 1e-12
    assert mean == pytest.approx(feynman_kac_constant(1.0, 0.1, 1.0), abs=1e-3)


def test_estimate_value_checks():
    m = brownian(1)
    p = make_payoffs(1.0, 0.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        estimate_value(m, p, null_control(0.5, 1), fixed_time(0.5), 0.0, [0.0], 1.0, 10, 0.01, 0)
    with pytest.raises(ValueError):
        estimate_value(m, p, null_control(1.0, 1), fixed_time(1.0), 0.0, [0.0], 1.0, 1, 0.01, 0)
    with pytest.raises(ValueError):
        StopRule("random")
    with pytest.raises(ValueError):
        contact(lambda t, x: x, 0.0)


def test_estimate_is_reproducible():
    m = brownian(1)
    p = make_payoffs(1.0, "max(0, 1 - x1)", 0.5, 0.0, 1.0)
    ctrl = ControlPath(1.0, 1, segments=[Segment(0.0, 0.5, (1.0,), 0.4)])
    a = estimate_value(m, p, ctrl, fixed_time(0.7), 0.0, [0.0], 1.0, 500, 0.01, 3)
    b = estimate_value(m, p, ctrl, fixed_time(0.7), 0.0, [0.0], 1.0, 500, 0.01, 3)
    assert a == b


def test_crosscheck_on_zero_game():
    m = brownian(2, d0=1)
    p = make_payoffs(1.0, 0.0, 0.0, 0.0, 1.0, d=2)
    zero = lambda t, x: np.zeros(np.shape(x)[:-1])  # noqa: E731
    bat = [null_control(1.0, 2, 1)] + random_battery(4, 2, 1.0, seed=0, d0=1)
    rep = crosscheck_optimality(zero, p, bat, 0.0, [0.0, 0.0], 100, 0.05, 1, model=m, tol_contact=1e-6)
    assert rep.passed
    assert [r.J_hat for r in rep.rows][0] == 0.0
    with pytest.raises(ValueError):
        crosscheck_optimality(zero, p, random_battery(1, 2, 1.0, seed=0), 0.0, [0.0, 0.0], 10, 0.05, 1,
                              model=m)
