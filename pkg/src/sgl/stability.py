"""Monte Carlo checks of the L1-stability estimates and the local-time bound.

All comparisons use common noise: the two processes being compared are driven
by the same Brownian increments (same seed and path indices), so their
difference isolates the effect of the control.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .control import ControlPath, check_opt_class, null_control, nu_total
from .model import PayoffSpec, SdeModel
from .payoff_mc import _mean_ci
from .simulate import Ensemble, n_steps_for, simulate_ensemble, worker_count

__all__ = [
    "k3_constant",
    "ExitRule",
    "StabilityReport",
    "BoundRow",
    "BoundReport",
    "ScalarProcess",
    "LocalTimeRow",
    "LocalTimeReport",
    "stability_experiment",
    "uncontrolled_comparison",
    "moment_bound_check",
    "local_time_lemma_check",
    "LOCAL_TIME_BANDWIDTH",
]

#: Bandwidth of the occupation-time estimator of the local time at 0.
LOCAL_TIME_BANDWIDTH = 0.01


def k3_constant(d: int, D1: float, T: float) -> float:
    """Gronwall constant ``3 d exp(5 d D1 T)`` of the L1-stability estimate.

    It comes from closing ``E|J_s| <= 5 d D1 int_0^s E|J| + 3 d gamma E[nu]``.

    Examples
    --------
    >>> k3_constant(1, 0.0, 1.0)
    3.0
    >>> round(k3_constant(1, 1.0, 1.0), 2)
    445.24
    """
    if d < 1 or D1 < 0 or T < 0:
        raise ValueError("need d >= 1, D1 >= 0 and T >= 0")
    return 3.0 * d * math.exp(5.0 * d * D1 * T)


@dataclass(frozen=True)
class ExitRule:
    """First grid time at which the reference path leaves the box ``[lo, hi]``.

    Paths that never leave stop at the horizon.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def indices(self, states: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        out = np.any((states < lo) | (states > hi), axis=-1)
        M = states.shape[1] - 1
        return np.where(out.any(axis=1), np.argmax(out, axis=1), M)


def _stop_indices(stop, ref: Ensemble) -> np.ndarray:
    M = ref.times.shape[0] - 1
    if isinstance(stop, ExitRule):
        return stop.indices(ref.post)
    s = float(stop)
    step = ref.times[1] - ref.times[0]
    k = int(round(s / step))
    if not 0 <= k <= M or abs(k * step - s) > 1e-9 * max(1.0, s):
        raise ValueError(f"stop time {s} is not on the simulation grid")
    return np.full(ref.n_paths, k)


def _chunked(n_paths: int, chunk: int, fn) -> list:
    """Apply ``fn(start, count)`` to consecutive path chunks, results in order."""
    starts = list(range(0, n_paths, chunk))
    args = [(s, min(chunk, n_paths - s)) for s in starts]
    workers = min(worker_count(), len(args))
    if workers <= 1:
        return [fn(*a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda a: fn(*a), args))


def _default_chunk(model: SdeModel, horizon: float, dt: float) -> int:
    M = n_steps_for(horizon, dt)
    return max(1, int(2e7 // ((M + 1) * model.d)))


@dataclass
class StabilityReport:
    """Measured ``E|X^gamma_tau - Xbar_tau|`` against ``gamma K3 E[nu]`` per gamma."""

    gammas: list[float]
    measured: list[float]
    ci: list[float]
    bound: list[float]
    k3: float
    nu_mean: float
    passes: list[bool]
    ratio: list[float]
    spread: float
    spread_tol: float = 0.25

    @property
    def passed(self) -> bool:
        """Hard criterion: every bound dominates ``measured - 3 CI``."""
        return all(self.passes)

    @property
    def linear(self) -> bool:
        """Soft criterion: relative spread of ``measured / gamma`` below ``spread_tol``."""
        return self.spread < self.spread_tol

    def to_csv(self) -> str:
        lines = ["gamma,measured,ci,bound,pass"]
        for g, m, c, b, p in zip(self.gammas, self.measured, self.ci, self.bound, self.passes):
            lines.append(f"{g!r},{m!r},{c!r},{b!r},{int(p)}")
        return "\n".join(lines) + "\n"


def stability_experiment(model: SdeModel, control: ControlPath, x, gammas: Sequence[float], stop,
                         n_paths: int, dt: float, seed: int, chunk: int | None = None) -> StabilityReport:
    """Compare the gamma-weighted controlled process with its constrained counterpart.

    The constrained process uses the directions ``n_[d0] / |n_[d0]|`` with mass
    ``|n_[d0]| d nu``, whose increments coincide with those of the original
    control with the last ``d1`` coordinates removed; it is simulated as the
    original control with weight 0, which keeps the two increment streams
    bitwise equal in the constrained coordinates.

    Parameters
    ----------
    model : SdeModel
    control : ControlPath
        Any control on ``[0, T - t]``; with ``nu = 0`` every distance is exactly 0.
    x : array_like
        Initial state.
    gammas : sequence of float
        Weights in ``[0, 1]``.
    stop : float or ExitRule
        Fixed stopping time on the grid, or first exit of the constrained
        process from a box.
    n_paths, dt, seed
        Ensemble size, time step and noise key.
    chunk : int, optional
        Paths simulated at once.

    Returns
    -------
    StabilityReport
    """
    horizon = control.horizon
    nu = nu_total(control, horizon)
    x = np.asarray(x, dtype=float).reshape(-1)
    gammas = [float(g) for g in gammas]
    chunk = chunk or _default_chunk(model, horizon, dt)

    def work(start, count):
        ref = simulate_ensemble(model, control, x, 0.0, dt, seed, count, path_start=start)
        idx = _stop_indices(stop, ref)
        rows = np.arange(count)
        xbar = ref.post[rows, idx]
        out = []
        for g in gammas:
            ens = simulate_ensemble(model, control, x, g, dt, seed, count, path_start=start)
            out.append(np.linalg.norm(ens.post[rows, idx] - xbar, axis=-1))
        return out

    parts = _chunked(n_paths, chunk, work)
    k3 = k3_constant(model.d, model.D1, horizon)
    measured, ci, bound, passes, ratio = [], [], [], [], []
    for i, g in enumerate(gammas):
        vals = np.concatenate([p[i] for p in parts])
        m, h = _mean_ci(vals)
        b = g * k3 * nu
        measured.append(m)
        ci.append(h)
        bound.append(b)
        passes.append(bool(m - 3.0 * h <= b))
        ratio.append(m / (g * nu) if g * nu > 0 else float("nan"))
    pos = [r for r in ratio if np.isfinite(r)]
    spread = (max(pos) - min(pos)) / max(pos) if pos and max(pos) > 0 else 0.0
    return StabilityReport(gammas, measured, ci, bound, k3, nu, passes, ratio, float(spread))


@dataclass(frozen=True)
class BoundRow:
    """One measured mean against its theoretical bound."""

    label: str
    measured: float
    ci: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.measured - 3.0 * self.ci <= self.bound)


@dataclass
class BoundReport:
    """Collection of :class:`BoundRow` plus the constants used."""

    name: str
    rows: list[BoundRow]
    constants: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(not r.passed for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_csv(self) -> str:
        lines = ["label,measured,ci,bound,pass"]
        for r in self.rows:
            lines.append(f"{r.label},{r.measured!r},{r.ci!r},{r.bound!r},{int(r.passed)}")
        return "\n".join(lines) + "\n"


def uncontrolled_comparison(model: SdeModel, control: ControlPath, x, stop, n_paths: int, dt: float,
                            seed: int, chunk: int | None = None) -> BoundReport:
    """Measure ``E|X^{[n,nu]}_tau - X^{[e1,0]}_tau|`` against ``K3 E[nu]``.

    ``control`` must lie in the constrained class; the stopping rule is
    evaluated on the uncontrolled process.
    """
    if not control.in_constrained_class(model.d0):
        raise ValueError("control must act only on the first d0 coordinates")
    horizon = control.horizon
    x = np.asarray(x, dtype=float).reshape(-1)
    null = null_control(horizon, model.d)
    chunk = chunk or _default_chunk(model, horizon, dt)

    def work(start, count):
        ref = simulate_ensemble(model, null, x, 1.0, dt, seed, count, path_start=start)
        idx = _stop_indices(stop, ref)
        rows = np.arange(count)
        if control.is_null:
            return np.zeros(count)
        ens = simulate_ensemble(model, control, x, 1.0, dt, seed, count, path_start=start)
        return np.linalg.norm(ens.post[rows, idx] - ref.post[rows, idx], axis=-1)

    vals = np.concatenate(_chunked(n_paths, chunk, work))
    m, h = _mean_ci(vals)
    k3 = k3_constant(model.d, model.D1, horizon)
    nu = nu_total(control, horizon)
    return BoundReport("uncontrolled_comparison", [BoundRow("control", m, h, k3 * nu)],
                       {"K3": k3, "nu": nu})


def _sup_norm_null(model: SdeModel, x: np.ndarray, horizon: float, n_paths: int, dt: float, seed: int,
                   chunk: int) -> tuple[float, float]:
    null = null_control(horizon, model.d)

    def work(start, count):
        ens = simulate_ensemble(model, null, x, 1.0, dt, seed, count, path_start=start)
        return np.max(np.linalg.norm(ens.post, axis=-1), axis=1)

    return _mean_ci(np.concatenate(_chunked(n_paths, chunk, work)))


def moment_bound_check(model: SdeModel, payoffs: PayoffSpec | None, battery: Sequence[ControlPath],
                       xs: Sequence, stops: Sequence, n_paths: int, dt: float, seed: int, K2: float,
                       chunk: int | None = None) -> BoundReport:
    """Check ``E|X_tau| <= K4 (1 + |x|)`` with ``K4 = K3 K2 + c_sde`` over a battery.

    ``c_sde`` is estimated as ``max_x (E sup_s |X^0_s| + 3 CI) / (1 + |x|)`` from
    null-control ensembles over the same ``x`` grid.

    Raises
    ------
    ValueError
        If a control violates ``nu_T <= K2 (1 + |x|)`` or its horizon differs
        from ``payoffs.T``.
    """
    if not battery:
        raise ValueError("empty battery")
    horizon = battery[0].horizon
    if payoffs is not None and abs(horizon - payoffs.T) > 1e-12:
        raise ValueError("control horizon must equal the payoff horizon")
    xs = [np.asarray(x, dtype=float).reshape(-1) for x in xs]
    for c in battery:
        if c.horizon != horizon:
            raise ValueError("battery controls must share one horizon")
        for x in xs:
            if not check_opt_class(c, x, K2):
                raise ValueError("control violates the bounded-expectation class")
    chunk = chunk or _default_chunk(model, horizon, dt)
    c_sde = 0.0
    for x in xs:
        m, h = _sup_norm_null(model, x, horizon, n_paths, dt, seed, chunk)
        c_sde = max(c_sde, (m + 3.0 * h) / (1.0 + float(np.linalg.norm(x))))
    k3 = k3_constant(model.d, model.D1, horizon)
    k4 = k3 * K2 + c_sde
    rows = []
    for ci_, c in enumerate(battery):
        for xi_, x in enumerate(xs):
            for si, stop in enumerate(stops):
                def work(start, count, c=c, x=x, stop=stop):
                    ens = simulate_ensemble(model, c, x, 1.0, dt, seed, count, path_start=start)
                    idx = _stop_indices(stop, ens)
                    return np.linalg.norm(ens.post[np.arange(count), idx], axis=-1)

                vals = np.concatenate(_chunked(n_paths, chunk, work))
                m, h = _mean_ci(vals)
                rows.append(BoundRow(f"c{ci_}_x{xi_}_s{si}", m, h, k4 * (1.0 + float(np.linalg.norm(x)))))
    return BoundReport("moment_bound", rows, {"K3": k3, "K2": K2, "c_sde": c_sde, "K4": k4})


@dataclass(frozen=True)
class ScalarProcess:
    """Scalar test semimartingale ``J_0 + b t + sigma W_t + sum of jumps``.

    ``jumps`` is a sequence of ``(time, size)`` pairs; times are snapped to the
    grid and a jump at time 0 acts on ``J_{0-} = x0``.
    """

    x0: float = 0.0
    drift: float = 0.0
    sigma: float = 1.0
    jumps: tuple[tuple[float, float], ...] = ()
    T: float = 1.0


@dataclass(frozen=True)
class LocalTimeRow:
    eps: float
    local_time: float
    local_time_ci: float
    rhs: float
    rhs_ci: float
    gap: float
    gap_ci: float

    @property
    def passed(self) -> bool:
        """``E[L] <= E[RHS] + 3 CI`` using the paired per-path gap ``RHS - L``."""
        return bool(self.gap >= -3.0 * self.gap_ci)


@dataclass
class LocalTimeReport:
    process: ScalarProcess
    rows: list[LocalTimeRow]
    bandwidth: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self) -> str:
        lines = ["eps,local_time,local_time_ci,rhs,rhs_ci,gap,gap_ci,pass"]
        for r in self.rows:
            lines.append(f"{r.eps!r},{r.local_time!r},{r.local_time_ci!r},{r.rhs!r},{r.rhs_ci!r},"
                         f"{r.gap!r},{r.gap_ci!r},{int(r.passed)}")
        return "\n".join(lines) + "\n"


def local_time_lemma_check(process: ScalarProcess, eps_list: Sequence[float], n_paths: int, dt: float,
                           seed: int, bandwidth: float = LOCAL_TIME_BANDWIDTH,
                           chunk: int | None = None) -> LocalTimeReport:
    """Compare the local time at 0 of a scalar process with the bound's right-hand side.

    Returns
    -------
    LocalTimeReport
        One row per ``eps`` with both sides' means and their paired gap.
    """
    M = n_steps_for(process.T, dt)
    step = process.T / M
    jump_inc = np.zeros(M + 1)
    for t_j, size in process.jumps:
        k = min(M, max(0, int(math.floor(t_j / step + 0.5))))
        jump_inc[k] += size
    jump_term = 2.0 * sum(abs(s) for _, s in process.jumps)
    chunk = chunk or max(1, int(2e7 // (M + 1)))
    eps_arr = np.array([float(e) for e in eps_list])
    if np.any((eps_arr <= 0) | (eps_arr >= 1)) or not bandwidth > 0:
        raise ValueError("eps must lie in (0, 1) and the bandwidth must be positive")

    def work(start, count):
        return kernels.scalar_occupation(float(process.x0), float(process.drift), float(process.sigma),
                                         jump_inc, step, int(seed) & 0xFFFFFFFFFFFFFFFF, start, count,
                                         float(bandwidth), eps_arr)

    parts = _chunked(n_paths, chunk, work)
    L = np.concatenate([p[0] for p in parts])
    lm, lh = _mean_ci(L)
    rows = []
    for i, e in enumerate(eps_arr):
        rhs = np.concatenate([p[1][:, i] for p in parts]) + jump_term
        rm, rh = _mean_ci(rhs)
        gm, gh = _mean_ci(rhs - L)
        rows.append(LocalTimeRow(float(e), lm, lh, rm, rh, gm, gh))
    return LocalTimeReport(process, rows, bandwidth)
