"""Pure-numpy implementations of the compiled kernels.

The functions mirror :mod:`sgl._kernels` exactly in signature and semantics;
results agree to floating-point rounding of the transcendental functions.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_PATH_MULT = np.uint64(0xD1B54A32D192ED03)
_PATH_INC = np.uint64(0x8CB92BA72F3D8DD7)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 6.283185307179586
_INV_2_53 = 1.1102230246251565e-16


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _path_keys(seed: int, path_start: int, n_paths: int) -> np.ndarray:
    s = np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    base = _mix64(s + _GOLDEN)
    paths = np.arange(path_start, path_start + n_paths, dtype=np.int64).astype(np.uint64)
    return _mix64(base ^ (paths * _PATH_MULT + _PATH_INC))


def _uniform(keys: np.ndarray, ctr: np.ndarray) -> np.ndarray:
    bits = _mix64(keys[:, None] + (ctr[None, :] + np.uint64(1)) * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def _normals_for_keys(keys: np.ndarray, q_start: int, n_q: int) -> np.ndarray:
    q = np.arange(q_start, q_start + n_q, dtype=np.int64).astype(np.uint64)
    pair = q >> np.uint64(1)
    u1 = _uniform(keys, np.uint64(2) * pair)
    u2 = _uniform(keys, np.uint64(2) * pair + np.uint64(1))
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    odd = (q & np.uint64(1)).astype(bool)
    return np.where(odd[None, :], rad * np.sin(ang), rad * np.cos(ang))


def normal_block(seed: int, path_start: int, n_paths: int, q_start: int, n_q: int) -> np.ndarray:
    """Standard normals for draws ``q_start .. q_start+n_q-1`` of each path."""
    if n_q == 0:
        return np.empty((n_paths, 0))
    keys = _path_keys(seed, path_start, n_paths)
    return _normals_for_keys(keys, q_start, n_q)


def euler_affine(x0, alpha, beta, vol_c, vol_s, cont_inc, atom_inc, dt, seed,
                 path_start, n_paths, dprime):
    """Euler-Maruyama for diagonal affine coefficients (numpy version)."""
    x0 = np.asarray(x0, dtype=np.float64)
    d = x0.shape[0]
    n_steps = cont_inc.shape[0]
    pre = np.empty((n_paths, n_steps + 1, d))
    post = np.empty((n_paths, n_steps + 1, d))
    pre[:, 0, :] = x0
    post[:, 0, :] = x0 + atom_inc[0]
    sq = np.sqrt(dt)
    keys = _path_keys(seed, path_start, n_paths)
    block = 256
    bad = -1
    with np.errstate(over="ignore", invalid="ignore"):
        for k0 in range(0, n_steps, block):
            k1 = min(n_steps, k0 + block)
            z = _normals_for_keys(keys, k0 * dprime, (k1 - k0) * dprime)
            z = z.reshape(n_paths, k1 - k0, dprime)[:, :, :d]
            for k in range(k0, k1):
                xv = post[:, k, :]
                xv = xv + (alpha + beta * xv) * dt + (vol_c + vol_s * xv) * (sq * z[:, k - k0, :]) \
                    + cont_inc[k]
                pre[:, k + 1, :] = xv
                post[:, k + 1, :] = xv + atom_inc[k + 1]
                if bad < 0 and not np.all(np.isfinite(xv)):
                    bad = k + 1
    return pre, post, bad


def scalar_occupation(x0, drift, sigma, jump_inc, dt, seed, path_start, n_paths, bandwidth, eps):
    """Local-time and bound sums for a scalar test process (numpy version)."""
    jump_inc = np.asarray(jump_inc, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    n_steps = jump_inc.shape[0] - 1
    if sigma != 0.0:
        keys = _path_keys(seed, path_start, n_paths)
        dj = drift * dt + sigma * (np.sqrt(dt) * _normals_for_keys(keys, 0, n_steps))
    else:
        dj = np.full((n_paths, n_steps), drift * dt)
    j = np.empty((n_paths, n_steps))
    if n_steps:
        j[:, 0] = x0 + jump_inc[0]
        for k in range(1, n_steps):
            j[:, k] = j[:, k - 1] + dj[:, k - 1] + jump_inc[k]
    dq = sigma * sigma * dt
    L = np.sum(np.abs(j) < bandwidth, axis=1) * dq / (2.0 * bandwidth)
    S = np.empty((n_paths, eps.shape[0]))
    for m, e in enumerate(eps):
        tail = np.where(j >= e, np.exp(np.minimum(1.0 - j / e, 0.0)), 0.0)
        phi = np.where((j >= 0.0) & (j < e), 1.0, 0.0) + tail
        S[:, m] = 4.0 * e - 2.0 * np.sum(phi * dj, axis=1) + np.sum(np.where(j > e, tail, 0.0), axis=1) * dq / e
    return L, S
