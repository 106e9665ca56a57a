import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgl.control import (Atom, ControlPath, Segment, battery_from_json, battery_to_json, check_opt_class,
                         gamma_weight, null_control, nu_total, project_control, random_battery)

D = 3


@st.composite
def unit_vectors(draw, d=D):
    v = np.array(draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d)))
    if np.linalg.norm(v) < 1e-3:
        v = np.eye(d)[draw(st.integers(0, d - 1))]
    return tuple(v / np.linalg.norm(v))


@st.composite
def controls(draw, d=D, horizon=2.0):
    times = sorted(draw(st.lists(st.floats(0, horizon), max_size=4)))
    atoms = [Atom(t, draw(unit_vectors(d)), draw(st.floats(0, 2))) for t in times]
    cuts = sorted(draw(st.lists(st.floats(0, horizon), min_size=0, max_size=4)))
    segs = [Segment(a, b, draw(unit_vectors(d)), draw(st.floats(0, 3)))
            for a, b in zip(cuts[::2], cuts[1::2]) if b > a]
    return ControlPath(horizon, d, segs, atoms)


@given(controls(), st.integers(1, D))
def test_projection_idempotent(path, d0):
    once = project_control(path, d0)
    assert project_control(once, d0) == once
    assert once.in_constrained_class(d0)


@given(controls(), st.integers(1, D), st.floats(0, 2))
def test_projection_keeps_controlled_increments(path, d0, t):
    proj = project_control(path, d0)
    np.testing.assert_allclose(proj.accumulated(t)[:d0], path.accumulated(t)[:d0], atol=1e-12)
    assert np.all(proj.accumulated(t)[d0:] == 0)


@given(controls(), st.integers(1, D), st.floats(0, 2))
def test_projected_mass_is_smaller(path, d0, t):
    assert nu_total(project_control(path, d0), t) <= nu_total(path, t) + 1e-12


@given(unit_vectors(), st.floats(0, 1))
def test_gamma_weight(n, gamma):
    w = gamma_weight(n, gamma, 1)
    assert w[0] == n[0]
    np.testing.assert_allclose(w[1:], gamma * np.asarray(n[1:]))
    constrained = (1.0, 0.0, 0.0)
    assert tuple(gamma_weight(constrained, gamma, 1)) == constrained


def test_nu_total_counts_atoms_right_continuously():
    p = ControlPath(1.0, 2, atoms=[Atom(0.5, (0.6, 0.8), 0.5)])
    assert nu_total(p, 0.4999) == 0.0
    assert nu_total(p, 0.5) == 0.5
    with pytest.raises(ValueError):
        nu_total(p, 1.5)


@pytest.mark.parametrize("make", [
    lambda: Atom(0.1, (1.0, 1.0), 1.0),
    lambda: Atom(0.1, (1.0, 0.0), -1.0),
    lambda: Segment(0.5, 0.2, (1.0,), 1.0),
    lambda: Segment(0.0, 0.2, (1.0,), -1.0),
    lambda: ControlPath(1.0, 2, atoms=[Atom(0.5, (0.0, 1.0), 1.0)], d0=1),
    lambda: ControlPath(1.0, 1, atoms=[Atom(0.5, (1.0,), 1.0), Atom(0.2, (1.0,), 1.0)]),
    lambda: ControlPath(1.0, 1, segments=[Segment(0.0, 0.5, (1.0,), 1), Segment(0.4, 0.6, (1.0,), 1)]),
    lambda: ControlPath(0.0, 1),
])
def test_invalid_controls(make):
    with pytest.raises(ValueError):
        make()


def test_projection_of_purely_uncontrolled_direction():
    p = ControlPath(1.0, 2, atoms=[Atom(0.2, (0.0, 1.0), 3.0)])
    q = project_control(p, 1)
    assert q.atoms[0].size == 0.0
    assert q.atoms[0].direction == (1.0, 0.0)


def test_battery_properties():
    bat = random_battery(30, 3, 2.0, seed=4, d0=2, total_cap=1.5)
    assert len(bat) == 30
    assert all(p.in_constrained_class(2) for p in bat)
    assert all(nu_total(p, 2.0) <= 1.5 + 1e-12 for p in bat)
    assert random_battery(30, 3, 2.0, seed=4, d0=2, total_cap=1.5) == bat


def test_battery_json_roundtrip():
    bat = random_battery(5, 2, 1.0, seed=1)
    assert battery_from_json(battery_to_json(bat)) == bat
    assert battery_from_json(json.dumps(bat[0].to_dict())) == bat[:1]


def test_null_and_opt_class():
    z = null_control(1.0, 2, 1)
    assert z.is_null
    assert check_opt_class(z, [0.0, 0.0], 1.0)
    big = ControlPath(1.0, 1, atoms=[Atom(0.0, (1.0,), 5.0)])
    assert not check_opt_class(big, [1.0], 2.0)
    assert check_opt_class(big, [2.0], 2.0)
