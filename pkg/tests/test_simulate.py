import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgl.control import Atom, ControlPath, Segment, null_control, project_control, random_battery
from sgl.model import model_from_expressions, ornstein_uhlenbeck
from sgl.simulate import (SimulationError, control_schedule, coupled_pair, dgi_rhs, dump_path_csv,
                          euler_controlled, iter_ensemble, local_time_zero, n_steps_for,
                          simulate_ensemble)

CTRL = ControlPath(1.0, 2, segments=[Segment(0.1, 0.6, (0.6, 0.8), 0.7)],
                   atoms=[Atom(0.0, (0.0, 1.0), 0.3), Atom(0.5, (-0.8, 0.6), 0.4)])


def test_determinism(ou2):
    a = euler_controlled(ou2, CTRL, [0.5, -1.0], 0.3, 1e-2, seed=9, path_index=4)
    b = euler_controlled(ou2, CTRL, [0.5, -1.0], 0.3, 1e-2, seed=9, path_index=4)
    np.testing.assert_array_equal(a.states_post, b.states_post)
    np.testing.assert_array_equal(a.states_pre, b.states_pre)
    c = euler_controlled(ou2, CTRL, [0.5, -1.0], 0.3, 1e-2, seed=10, path_index=4)
    assert not np.array_equal(a.states_post, c.states_post)


def test_single_path_equals_ensemble_row(ou2):
    ens = simulate_ensemble(ou2, CTRL, [0.0, 0.0], 0.5, 1e-2, seed=3, n_paths=10)
    one = euler_controlled(ou2, CTRL, [0.0, 0.0], 0.5, 1e-2, seed=3, path_index=7)
    np.testing.assert_array_equal(ens.post[7], one.states_post)


def test_chunking_does_not_change_paths(ou2):
    whole = simulate_ensemble(ou2, CTRL, [0.0, 0.0], 0.5, 1e-2, seed=3, n_paths=25)
    parts = list(iter_ensemble(ou2, CTRL, [0.0, 0.0], 0.5, 1e-2, seed=3, n_paths=25, chunk=7))
    assert [p.path_start for p in parts] == [0, 7, 14, 21]
    np.testing.assert_array_equal(np.concatenate([p.post for p in parts]), whole.post)


@given(st.integers(0, 10**6), st.floats(0, 1))
def test_constrained_controls_ignore_gamma(seed, gamma):
    m = ornstein_uhlenbeck(d=2, d0=1, theta=0.1, sigma=0.4)
    ctrl = random_battery(1, 2, 1.0, seed=seed, d0=1)[0]
    a = euler_controlled(m, ctrl, [0.2, 0.1], gamma, 0.05, seed)
    b = euler_controlled(m, ctrl, [0.2, 0.1], 1.0, 0.05, seed)
    np.testing.assert_array_equal(a.states_post, b.states_post)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 1.0])
def test_coupled_pair_first_coordinates(ou2, gamma):
    """Controlled-coordinate increments of the control agree between the pair."""
    a, b = coupled_pair(ou2, CTRL, [0.0, 0.0], gamma, 1e-2, seed=5)
    s_a = control_schedule(CTRL, gamma, 1, 1e-2)
    s_b = control_schedule(project_control(CTRL, 1), gamma, 1, 1e-2)
    np.testing.assert_allclose(np.cumsum(s_a.cont_inc[:, :1], 0), np.cumsum(s_b.cont_inc[:, :1], 0),
                               atol=1e-12)
    np.testing.assert_allclose(s_a.atom_inc[:, :1], s_b.atom_inc[:, :1], atol=1e-12)
    if gamma == 0.0:
        np.testing.assert_allclose(a.states_post, b.states_post, atol=1e-12)


def test_generic_path_matches_affine_kernel():
    aff = ornstein_uhlenbeck(d=2, d0=1, theta=[0.3, 0.1], mean=[0.5, 0.0], sigma=[0.4, 0.2])
    gen = model_from_expressions(2, 1, ["0.3*(0.5 - x1)", "0.1*(0 - x2)"], [["0.4", "0"], ["0", "0.2"]],
                                 D1=0.3, D2=1.0)
    a = simulate_ensemble(aff, CTRL, [1.0, -1.0], 0.5, 1e-2, seed=8, n_paths=6)
    b = simulate_ensemble(gen, CTRL, [1.0, -1.0], 0.5, 1e-2, seed=8, n_paths=6)
    np.testing.assert_allclose(a.post, b.post, atol=1e-12)


def test_atoms_are_snapped_and_split(ou2):
    p = euler_controlled(ou2, CTRL, [0.0, 0.0], 1.0, 0.1, seed=1)
    np.testing.assert_allclose(p.states_post[0] - p.states_pre[0], [0.0, 0.3])
    np.testing.assert_allclose(p.states_post[5] - p.states_pre[5], [-0.32, 0.24], atol=1e-12)
    jump_free = np.delete(np.arange(11), [0, 5])
    np.testing.assert_array_equal(p.states_post[jump_free], p.states_pre[jump_free])


def test_schedule_masses():
    s = control_schedule(CTRL, 1.0, 1, 0.01)
    assert s.nu[-1] == pytest.approx(0.3 + 0.4 + 0.35)
    assert n_steps_for(1.0, 0.3) == 3
    with pytest.raises(ValueError):
        n_steps_for(1.0, 0.0)


def test_divergence_raises():
    m = model_from_expressions(1, 1, ["x1*x1*x1"], [["1"]], D1=1, D2=1)
    with pytest.raises(SimulationError):
        euler_controlled(m, null_control(5.0, 1), [3.0], 1.0, 0.5, seed=0)


def test_local_time_nonnegative(rng):
    J = rng.normal(size=(20, 101))
    q = rng.random((20, 100))
    assert np.all(local_time_zero(J, 0.1, q) >= 0)
    with pytest.raises(ValueError):
        local_time_zero(J, 0.0, q)


def test_dgi_rhs_deterministic_case():
    # J_t = t sampled at left points, unit drift, no noise, one jump of size 0.2
    n = 2000
    J = np.arange(n) / n
    e = 0.1
    val = dgi_rhs(J, e, np.full(n, 1.0 / n), np.zeros(n), np.array([0.2]))
    exact = 4 * e - 2 * (e + e * (1 - np.exp(1 - 1 / e))) + 0.4
    assert val == pytest.approx(exact, abs=1e-3)
    with pytest.raises(ValueError):
        dgi_rhs(J, 1.0, np.zeros(n), np.zeros(n), np.zeros(1))


def test_dump_path_csv(ou2):
    p = euler_controlled(ou2, CTRL, [0.0, 0.0], 1.0, 0.25, seed=1)
    buf = io.StringIO()
    dump_path_csv(p, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "step,time,x1_pre,x2_pre,x1_post,x2_post"
    assert len(lines) == 6
