import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgl.control import Atom, ControlPath, null_control, random_battery
from sgl.model import brownian, ornstein_uhlenbeck
from sgl.reference import expected_brownian_local_time
from sgl.stability import (ExitRule, ScalarProcess, k3_constant, local_time_lemma_check,
                           moment_bound_check, stability_experiment, uncontrolled_comparison)

DIAG = (1 / math.sqrt(2), 1 / math.sqrt(2))


@given(st.integers(1, 4), st.floats(0, 2), st.floats(0, 2), st.floats(0.01, 1))
def test_k3_monotone(d, D1, T, bump):
    base = k3_constant(d, D1, T)
    assert k3_constant(d + 1, D1, T) > base
    assert k3_constant(d, D1 + bump, T) >= base
    assert k3_constant(d, D1, T + bump) >= base
    if D1 > 1e-3 and T > 1e-3:
        assert k3_constant(d, D1 + bump, T) > base


def test_k3_domain():
    with pytest.raises(ValueError):
        k3_constant(0, 1.0, 1.0)


def test_deterministic_atom_example():
    """Without noise the gap is the uncontrolled part of the jump, scaled by gamma."""
    m = brownian(2, d0=1, sigma=0.0)
    ctrl = ControlPath(1.0, 2, atoms=[Atom(0.5, DIAG, 1.0)])
    rep = stability_experiment(m, ctrl, [0.0, 0.0], [0.0, 0.1, 0.4], 1.0, 20, 0.01, seed=1)
    np.testing.assert_allclose(rep.measured, [0.0, 0.1 / math.sqrt(2), 0.4 / math.sqrt(2)], atol=1e-15)
    assert rep.k3 == 6.0
    np.testing.assert_allclose(rep.bound, [0.0, 0.6, 2.4])
    assert rep.passed


def test_null_control_gives_zero(ou2):
    rep = stability_experiment(ou2, null_control(1.0, 2), [0.5, 0.5], [0.4, 0.2], 1.0, 200, 0.01, seed=2)
    assert rep.measured == [0.0, 0.0]
    assert rep.passed


def test_noisy_experiment_is_linear_and_bounded():
    m = ornstein_uhlenbeck(d=2, d0=1, theta=0.5, sigma=0.3)
    ctrl = ControlPath(1.0, 2, atoms=[Atom(0.2, (0.6, 0.8), 0.5), Atom(0.5, (0.8, -0.6), 0.4)])
    rep = stability_experiment(m, ctrl, [0.0, 0.0], [0.4, 0.2, 0.1], 1.0, 2000, 0.01, seed=3)
    assert rep.passed
    assert rep.linear
    assert rep.measured[0] >= rep.measured[1] >= rep.measured[2]
    assert rep.to_csv().splitlines()[0] == "gamma,measured,ci,bound,pass"


def test_results_do_not_depend_on_chunking(ou2):
    ctrl = ControlPath(1.0, 2, atoms=[Atom(0.3, DIAG, 0.5)])
    a = stability_experiment(ou2, ctrl, [0.0, 0.0], [0.3], 1.0, 300, 0.01, seed=4)
    b = stability_experiment(ou2, ctrl, [0.0, 0.0], [0.3], 1.0, 300, 0.01, seed=4, chunk=70)
    assert a.measured == pytest.approx(b.measured, rel=1e-14)


def test_exit_rule():
    states = np.array([[[0.0], [0.5], [1.5], [0.0]], [[0.0], [0.1], [0.2], [0.3]]])
    np.testing.assert_array_equal(ExitRule((-1.0,), (1.0,)).indices(states), [2, 3])


def test_stop_time_must_be_on_grid(ou2):
    with pytest.raises(ValueError):
        stability_experiment(ou2, null_control(1.0, 2), [0, 0], [0.1], 0.555, 10, 0.01, seed=0)


def test_uncontrolled_comparison_deterministic():
    m = brownian(2, d0=1, sigma=0.0)
    ctrl = ControlPath(1.0, 2, atoms=[Atom(0.0, (1.0, 0.0), 1.0)], d0=1)
    rep = uncontrolled_comparison(m, ctrl, [0.0, 0.0], 1.0, 10, 0.01, seed=0)
    assert rep.rows[0].measured == 1.0 and rep.rows[0].bound == 6.0
    assert rep.passed
    with pytest.raises(ValueError):
        uncontrolled_comparison(m, ControlPath(1.0, 2, atoms=[Atom(0.0, DIAG, 1.0)]), [0, 0], 1.0, 10,
                                0.01, seed=0)


def test_moment_bound(ou2):
    bat = [null_control(1.0, 2, 1)] + random_battery(2, 2, 1.0, seed=5, d0=1, total_cap=2.0)
    rep = moment_bound_check(ou2, None, bat, [[0.0, 0.0], [1.0, -1.0]], [1.0, ExitRule((-1, -1), (1, 1))],
                             200, 0.01, seed=6, K2=2.0)
    assert len(rep.rows) == 3 * 2 * 2
    assert rep.passed
    assert rep.constants["K4"] == pytest.approx(rep.constants["K3"] * 2.0 + rep.constants["c_sde"])
    with pytest.raises(ValueError):
        moment_bound_check(ou2, None, [ControlPath(1.0, 2, atoms=[Atom(0.0, (1.0, 0.0), 10.0)])],
                           [[0.0, 0.0]], [1.0], 10, 0.01, seed=6, K2=2.0)


def test_local_time_brownian_oracle():
    rep = local_time_lemma_check(ScalarProcess(), [0.1, 0.05], 4000, 1e-3, seed=7)
    L = rep.rows[0].local_time
    # the occupation estimator is biased low by about bandwidth / 2 times the density
    assert abs(L - expected_brownian_local_time()) < 0.05 * 0.7979 + 3 * rep.rows[0].local_time_ci
    assert rep.passed


def test_local_time_with_jumps_and_drift():
    proc = ScalarProcess(x0=0.1, drift=-0.2, jumps=((0.3, 0.3), (0.6, -0.3)))
    rep = local_time_lemma_check(proc, [0.1], 2000, 1e-3, seed=8)
    assert rep.passed
    assert rep.rows[0].rhs >= 1.2  # the jump term alone
    assert rep.to_csv().splitlines()[0].startswith("eps,local_time")


def test_local_time_without_noise():
    rep = local_time_lemma_check(ScalarProcess(sigma=0.0, drift=1.0), [0.1], 3, 1e-3, seed=0)
    assert rep.rows[0].local_time == 0.0
    with pytest.raises(ValueError):
        local_time_lemma_check(ScalarProcess(), [1.5], 10, 1e-2, seed=0)
