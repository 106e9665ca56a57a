import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgl import _fallback, kernels

try:
    from sgl import _kernels as compiled
except ImportError:  # pragma: no cover - exercised only without a build
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _affine_args(n_steps=50, d=2, dprime=2):
    rng = np.random.default_rng(0)
    cont = rng.normal(0, 0.01, (n_steps, d))
    atom = np.zeros((n_steps + 1, d))
    atom[0] = [0.3, 0.0][:d]
    atom[n_steps // 2] = [0.0, -0.2][:d]
    return (np.array([0.1, -0.2][:d]), np.array([0.05, 0.0][:d]), np.array([-0.3, -0.1][:d]),
            np.array([0.4, 0.3][:d]), np.array([0.0, 0.1][:d]), cont, atom, 0.01, 77, 5, 64, dprime)


def test_normal_moments():
    z = kernels.normal_block(1, 0, 2000, 0, 100)
    assert z.shape == (2000, 100)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01


@given(st.integers(0, 2**63 - 1), st.integers(0, 1000), st.integers(1, 20), st.integers(0, 50),
       st.integers(1, 30))
def test_normals_are_keyed_by_path_and_draw(seed, start, n, q0, nq):
    full = _fallback.normal_block(seed, 0, start + n, 0, q0 + nq)
    part = _fallback.normal_block(seed, start, n, q0, nq)
    np.testing.assert_array_equal(part, full[start:, q0:])


@needs_compiled
def test_compiled_normals_match_fallback():
    a = compiled.normal_block(2**40 + 3, 17, 33, 5, 41)
    b = _fallback.normal_block(2**40 + 3, 17, 33, 5, 41)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_compiled
@pytest.mark.parametrize("d,dprime", [(1, 1), (2, 2), (2, 3)])
def test_compiled_euler_matches_fallback(d, dprime):
    args = _affine_args(d=d, dprime=dprime)
    pre_c, post_c, bad_c = compiled.euler_affine(*args)
    pre_f, post_f, bad_f = _fallback.euler_affine(*args)
    assert bad_c == bad_f == -1
    np.testing.assert_allclose(pre_c, pre_f, atol=1e-12)
    np.testing.assert_allclose(post_c, post_f, atol=1e-12)


@pytest.mark.parametrize("impl", ["fallback", "compiled"])
def test_euler_batching_invariance(impl):
    mod = _fallback if impl == "fallback" else compiled
    if mod is None:
        pytest.skip("compiled extension not built")
    args = list(_affine_args())
    whole = mod.euler_affine(*args)
    args[9], args[10] = 5 + 40, 24
    tail = mod.euler_affine(*args)
    np.testing.assert_array_equal(whole[1][40:], tail[1])


def test_euler_atoms_split_pre_and_post():
    args = _affine_args()
    pre, post, _ = _fallback.euler_affine(*args)
    atom = args[6]
    np.testing.assert_allclose(post - pre, np.broadcast_to(atom, pre.shape), atol=1e-14)


def test_euler_reports_blow_up():
    args = list(_affine_args())
    args[1] = np.array([1e300, 1e300])
    args[7] = 10.0
    pre, _, bad = _fallback.euler_affine(*args)
    assert bad > 0
    assert np.all(np.isfinite(pre[:, :bad]))
    assert not np.all(np.isfinite(pre[:, bad]))


@needs_compiled
@pytest.mark.parametrize("sigma,jumps", [(1.0, {}), (1.0, {30: 0.3, 60: -0.3}), (0.0, {0: -0.2})])
def test_compiled_occupation_matches_fallback(sigma, jumps):
    n_steps = 100
    jinc = np.zeros(n_steps + 1)
    for k, v in jumps.items():
        jinc[k] = v
    eps = np.array([0.1, 0.05])
    args = (0.0, 0.2, sigma, jinc, 0.01, 9, 3, 50, 0.01, eps)
    Lc, Sc = compiled.scalar_occupation(*args)
    Lf, Sf = _fallback.scalar_occupation(*args)
    np.testing.assert_allclose(Lc, Lf, atol=1e-12)
    np.testing.assert_allclose(Sc, Sf, atol=1e-10)


def test_occupation_deterministic_drift():
    # J_t = t on [0, 1]: L = 0 (no quadratic variation), S = 4 eps - 2 int phi(J) dJ
    n = 1000
    L, S = _fallback.scalar_occupation(0.0, 1.0, 0.0, np.zeros(n + 1), 1.0 / n, 0, 0, 1, 0.01,
                                       np.array([0.1]))
    assert L[0] == 0.0
    e = 0.1
    exact = 4 * e - 2 * (e + e * (1 - np.exp(1 - 1 / e)))
    assert S[0, 0] == pytest.approx(exact, abs=2e-3)


def test_backend_env_selects_fallback():
    env = dict(os.environ, SGL_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import sgl.kernels as k; print(k.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
