"""Euler-Maruyama simulation of the controlled SDE and local-time tools.

Time grid: ``t_k = k dt`` for ``k = 0 .. M`` with ``M = round(horizon / dt)``.
For every path the simulator stores the left limits ``pre[k] = X_{t_k-}`` and
the states ``post[k] = X_{t_k}``:

* ``pre[0] = x`` and ``post[0] = x + atom increment at 0``;
* ``pre[k+1] = post[k] + b(post[k]) dt + kappa(post[k]) dW_k + segment increment``;
* ``post[k+1] = pre[k+1] + atom increment at t_{k+1}``.

Atoms are snapped to the nearest grid time; segment increments use the exact
overlap of each segment with ``[t_k, t_{k+1})``.  Control increments are
gamma-weighted.  Brownian increments come from a counter-based generator
keyed by ``(seed, path index, draw index)``: a path's noise does not depend on
how paths are batched.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .control import ControlPath, gamma_weight, project_control
from .model import SdeModel

__all__ = [
    "SimulationError",
    "SamplePath",
    "Ensemble",
    "ControlSchedule",
    "n_steps_for",
    "control_schedule",
    "simulate_ensemble",
    "iter_ensemble",
    "euler_controlled",
    "coupled_pair",
    "local_time_zero",
    "dgi_rhs",
    "dump_path_csv",
    "worker_count",
]


class SimulationError(RuntimeError):
    """A simulated state became non-finite; ``step`` is the offending grid index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


def worker_count() -> int:
    """Worker threads allowed by ``SGL_THREADS`` (default: CPU count)."""
    env = os.environ.get("SGL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def n_steps_for(horizon: float, dt: float) -> int:
    """Number of Euler steps covering ``horizon`` (at least one)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return max(1, int(round(horizon / dt)))


@dataclass(frozen=True)
class ControlSchedule:
    """Control increments on the simulation grid.

    ``cont_inc[k]`` (shape ``(M, d)``) is the gamma-weighted continuous
    increment over step ``k``, ``atom_inc[k]`` (shape ``(M+1, d)``) the
    gamma-weighted jump at ``t_k``; ``dnu_cont`` and ``dnu_atom`` are the
    corresponding unweighted masses of ``nu``.
    """

    times: np.ndarray
    cont_inc: np.ndarray
    atom_inc: np.ndarray
    dnu_cont: np.ndarray
    dnu_atom: np.ndarray

    @property
    def nu(self) -> np.ndarray:
        """``nu`` at each grid time (right-continuous)."""
        out = np.cumsum(self.dnu_atom)
        out[1:] += np.cumsum(self.dnu_cont)
        return out


def control_schedule(control: ControlPath, gamma: float, d0: int, dt: float,
                     horizon: float | None = None) -> ControlSchedule:
    """Discretise ``control`` on the grid of step ``dt``."""
    horizon = control.horizon if horizon is None else horizon
    M = n_steps_for(horizon, dt)
    times = np.arange(M + 1) * (horizon / M)
    step = horizon / M
    d = control.d
    cont = np.zeros((M, d))
    atom = np.zeros((M + 1, d))
    dnu_c = np.zeros(M)
    dnu_a = np.zeros(M + 1)
    for s in control.segments:
        nvec = gamma_weight(s.direction, gamma, d0)
        k0 = max(0, int(np.floor(s.start / step)))
        k1 = min(M, int(np.ceil(s.end / step)))
        for k in range(k0, k1):
            mass = s.rate * max(0.0, min(s.end, times[k + 1]) - max(s.start, times[k]))
            if mass > 0:
                cont[k] += nvec * mass
                dnu_c[k] += mass
    for a in control.atoms:
        k = min(M, max(0, int(np.floor(a.time / step + 0.5))))
        atom[k] += gamma_weight(a.direction, gamma, d0) * a.size
        dnu_a[k] += a.size
    return ControlSchedule(times, cont, atom, dnu_c, dnu_a)


@dataclass(frozen=True)
class Ensemble:
    """States of ``n_paths`` simulated paths, arrays of shape ``(n, M+1, d)``."""

    times: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    path_start: int
    seed: int

    @property
    def n_paths(self) -> int:
        return self.pre.shape[0]


@dataclass(frozen=True)
class SamplePath:
    """One simulated path: ``states_pre[k] = X_{t_k-}``, ``states_post[k] = X_{t_k}``."""

    times: np.ndarray
    states_pre: np.ndarray
    states_post: np.ndarray
    noise_seed: int
    path_index: int = 0


def _simulate_block(model: SdeModel, sched: ControlSchedule, x: np.ndarray, dt: float, seed: int,
                    path_start: int, n_paths: int) -> tuple[np.ndarray, np.ndarray]:
    M = sched.cont_inc.shape[0]
    d, dp = model.d, model.dprime
    if model.affine is not None:
        aff = model.affine
        pre, post, bad = kernels.euler_affine(
            np.ascontiguousarray(x, dtype=np.float64), aff.alpha, aff.beta, aff.c, aff.s,
            np.ascontiguousarray(sched.cont_inc), np.ascontiguousarray(sched.atom_inc),
            float(dt), int(seed) & 0xFFFFFFFFFFFFFFFF, int(path_start), int(n_paths), int(dp))
    else:
        pre = np.empty((n_paths, M + 1, d))
        post = np.empty((n_paths, M + 1, d))
        pre[:, 0] = x
        post[:, 0] = x + sched.atom_inc[0]
        sq = np.sqrt(dt)
        bad = -1
        block = 128
        with np.errstate(over="ignore", invalid="ignore"):
            for k0 in range(0, M, block):
                k1 = min(M, k0 + block)
                z = kernels.normal_block(int(seed) & 0xFFFFFFFFFFFFFFFF, int(path_start), int(n_paths),
                                         k0 * dp, (k1 - k0) * dp).reshape(n_paths, k1 - k0, dp)
                for k in range(k0, k1):
                    xv = post[:, k]
                    b = model.drift(xv)
                    kap = model.diffusion(xv)
                    dw = sq * z[:, k - k0]
                    xn = xv + b * dt + np.einsum("nij,nj->ni", kap, dw) + sched.cont_inc[k]
                    pre[:, k + 1] = xn
                    post[:, k + 1] = xn + sched.atom_inc[k + 1]
                    if bad < 0 and not np.all(np.isfinite(xn)):
                        bad = k + 1
    if bad >= 0:
        raise SimulationError(f"non-finite state at step {bad} (t = {bad * dt:.6g}); reduce dt", bad)
    return pre, post


def iter_ensemble(model: SdeModel, control: ControlPath, x, gamma: float, dt: float, seed: int,
                  n_paths: int, chunk: int | None = None, path_start: int = 0,
                  horizon: float | None = None) -> Iterator[Ensemble]:
    """Yield consecutive :class:`Ensemble` chunks covering ``n_paths`` paths.

    Chunks are produced in path order; with ``SGL_THREADS > 1`` they are
    computed by a thread pool but still yielded in order, so any reduction
    over the chunks is deterministic.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.d or control.d != model.d:
        raise ValueError("state/control dimension does not match the model")
    sched = control_schedule(control, gamma, model.d0, dt, horizon)
    step = sched.times[1] - sched.times[0]
    M = sched.cont_inc.shape[0]
    if chunk is None:
        chunk = max(1, min(n_paths, int(4e6 // ((M + 1) * model.d))))
    starts = list(range(path_start, path_start + n_paths, chunk))

    def work(s):
        n = min(chunk, path_start + n_paths - s)
        pre, post = _simulate_block(model, sched, x, step, seed, s, n)
        return Ensemble(sched.times, pre, post, s, seed)

    workers = min(worker_count(), len(starts))
    if workers <= 1:
        for s in starts:
            yield work(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i in range(0, len(starts), workers):
                yield from pool.map(work, starts[i:i + workers])


def simulate_ensemble(model: SdeModel, control: ControlPath, x, gamma: float, dt: float, seed: int,
                      n_paths: int, path_start: int = 0, horizon: float | None = None) -> Ensemble:
    """Simulate ``n_paths`` paths at once and return them as one :class:`Ensemble`."""
    parts = list(iter_ensemble(model, control, x, gamma, dt, seed, n_paths,
                               chunk=n_paths, path_start=path_start, horizon=horizon))
    return parts[0]


def euler_controlled(model: SdeModel, path: ControlPath, x, gamma: float, dt: float, seed: int,
                     path_index: int = 0) -> SamplePath:
    """Simulate one path of the gamma-weighted controlled SDE.

    Parameters
    ----------
    model : SdeModel
    path : ControlPath
        Control acting on ``[0, path.horizon]``.
    x : array_like
        Initial state ``X_{0-}``.
    gamma : float
        Weight of the uncontrolled coordinates of the control directions.
    dt : float
        Target step; the grid uses ``M = round(horizon / dt)`` equal steps.
    seed, path_index : int
        Keys of the noise stream.

    Raises
    ------
    SimulationError
        If the state becomes non-finite.
    """
    ens = simulate_ensemble(model, path, x, gamma, dt, seed, 1, path_start=path_index)
    return SamplePath(ens.times, ens.pre[0], ens.post[0], seed, path_index)


def coupled_pair(model: SdeModel, path: ControlPath, x, gamma: float, dt: float, seed: int,
                 path_index: int = 0) -> tuple[SamplePath, SamplePath]:
    """Paths under ``(n, nu)`` with weight ``gamma`` and under the projected control.

    Both are driven by the same Brownian increments.
    """
    proj = project_control(path, model.d0)
    a = euler_controlled(model, path, x, gamma, dt, seed, path_index)
    b = euler_controlled(model, proj, x, gamma, dt, seed, path_index)
    return a, b


def local_time_zero(J: np.ndarray, eps: float, quad_var: np.ndarray) -> np.ndarray | float:
    """Occupation-time estimate of the local time at 0.

    ``(1 / 2 eps) * sum_k 1{|J_k| < eps} dQ_k`` where ``J_k`` is the state at the
    start of step ``k`` and ``dQ_k`` the quadratic variation of that step.

    Parameters
    ----------
    J : ndarray, shape (..., M+1) or (..., M)
        Path values; only the first ``M`` entries (left points) are used.
    eps : float
        Bandwidth.
    quad_var : ndarray, shape (..., M)
        Per-step quadratic variation increments.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    q = np.asarray(quad_var, dtype=float)
    j = np.asarray(J, dtype=float)[..., : q.shape[-1]]
    out = np.sum(np.where(np.abs(j) < eps, q, 0.0), axis=-1) / (2.0 * eps)
    return float(out) if np.ndim(out) == 0 else out


def dgi_rhs(J_left: np.ndarray, eps: float, dJc: np.ndarray, quad_var: np.ndarray,
            jumps: np.ndarray) -> np.ndarray | float:
    """Discretised right-hand side of the local-time bound.

    ``4 eps - 2 sum phi(J_k) dJc_k + (1/eps) sum 1{J_k > eps} e^{1 - J_k/eps} dQ_k
    + 2 sum |jumps|`` with ``phi(J) = 1{0 <= J < eps} + 1{J >= eps} e^{1 - J/eps}``.

    Parameters
    ----------
    J_left : ndarray, shape (..., M)
        Left-point values of the path at each step.
    eps : float
        In ``(0, 1)``.
    dJc : ndarray, shape (..., M)
        Continuous increments of each step.
    quad_var : ndarray, shape (..., M)
        Continuous quadratic variation increments.
    jumps : ndarray, shape (..., K)
        Jump sizes (any sign).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    j = np.asarray(J_left, dtype=float)
    with np.errstate(over="ignore"):
        tail = np.where(j >= eps, np.exp(np.minimum(1.0 - j / eps, 0.0)), 0.0)
    phi = np.where((j >= 0) & (j < eps), 1.0, 0.0) + tail
    strict = np.where(j > eps, tail, 0.0)
    out = (4.0 * eps - 2.0 * np.sum(phi * dJc, axis=-1)
           + np.sum(strict * quad_var, axis=-1) / eps
           + 2.0 * np.sum(np.abs(jumps), axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def dump_path_csv(path: SamplePath, fh) -> None:
    """Write ``step,time,x1_pre..xd_pre,x1_post..xd_post`` rows to a text stream."""
    d = path.states_pre.shape[1]
    cols = ["step", "time"] + [f"x{i + 1}_pre" for i in range(d)] + [f"x{i + 1}_post" for i in range(d)]
    fh.write(",".join(cols) + "\n")
    for k, t in enumerate(path.times):
        vals = [repr(float(t))] + [repr(float(v)) for v in path.states_pre[k]] \
            + [repr(float(v)) for v in path.states_post[k]]
        fh.write(f"{k}," + ",".join(vals) + "\n")
