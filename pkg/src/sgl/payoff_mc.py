"""Monte Carlo evaluation of the game payoff and the stopping rule theta*.

For a path started at time ``t`` and stopped at grid time ``s`` (relative to
``t``), the realised payoff is

    e^{-r s} g(t+s, X_s) + sum_{t_k < s} e^{-r t_k} h(t+t_k, X_{t_k}) dt
        + sum over control mass in [0, s] of e^{-r t_k} f(t+t_k) dnu_k,

where the control sum includes atoms at time 0 and exactly at ``s`` (closed
interval) and continuous mass of steps starting before ``s``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .control import ControlPath
from .model import PayoffSpec, SdeModel, f_gamma
from .seeds import derive_seed
from .simulate import ControlSchedule, Ensemble, SamplePath, control_schedule, iter_ensemble

__all__ = [
    "StopRule",
    "fixed_time",
    "contact",
    "payoff_one_path",
    "ensemble_payoffs",
    "realize_theta_star",
    "theta_star_indices",
    "estimate_value",
    "CrosscheckRow",
    "CrosscheckReport",
    "crosscheck_optimality",
    "Z95",
]

log = logging.getLogger(__name__)
Z95 = 1.96


@dataclass(frozen=True)
class StopRule:
    """Stopping rule: ``kind`` is ``"fixed"`` (time ``s``) or ``"contact"``.

    A contact rule stops at the first grid time where ``v - g <= tol`` on the
    post-jump state or on the pre-jump state (theta*).  ``value`` is any
    callable ``(t, x) -> v`` such as a :class:`~sgl.pde.PdeSolution`.
    """

    kind: str
    s: float | None = None
    value: Callable | None = None
    tol: float | None = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.s is None or self.s < 0:
                raise ValueError("fixed stop needs s >= 0")
        elif self.kind == "contact":
            if self.value is None or self.tol is None or not self.tol > 0:
                raise ValueError("contact rule needs a value function and tol > 0")
        else:
            raise ValueError(f"unknown stop rule kind {self.kind!r}")


def fixed_time(s: float) -> StopRule:
    """Stop at the grid time nearest to ``s``."""
    return StopRule("fixed", s=float(s))


def contact(value: Callable, tol: float) -> StopRule:
    """The theta* rule for value function ``value`` and contact tolerance ``tol``."""
    return StopRule("contact", value=value, tol=float(tol))


def _cost_fn(payoffs: PayoffSpec, f_variant) -> Callable:
    if f_variant is None or f_variant == "f":
        return lambda tt: np.asarray(payoffs.f(tt), dtype=float) * np.ones_like(tt)
    gamma = float(f_variant[1] if isinstance(f_variant, tuple) else f_variant)
    return lambda tt: np.asarray(f_gamma(payoffs, gamma, np.clip(tt, 0.0, payoffs.T)), dtype=float) \
        * np.ones_like(tt)


def _cum_control_cost(sched: ControlSchedule, payoffs: PayoffSpec, t: float, f_variant) -> np.ndarray:
    times = sched.times
    disc = np.exp(-payoffs.r * times)
    cost = _cost_fn(payoffs, f_variant)(t + times)
    atom = np.cumsum(disc * cost * sched.dnu_atom)
    cont = np.zeros_like(atom)
    cont[1:] = np.cumsum(disc[:-1] * cost[:-1] * sched.dnu_cont)
    return atom + cont


def ensemble_payoffs(ens: Ensemble, sched: ControlSchedule, stop_idx: np.ndarray, payoffs: PayoffSpec,
                     t: float, f_variant=None) -> np.ndarray:
    """Realised payoffs of every path of ``ens`` stopped at grid indices ``stop_idx``."""
    times = ens.times
    dt = times[1] - times[0]
    n = ens.n_paths
    s = np.asarray(stop_idx, dtype=np.int64)
    disc = np.exp(-payoffs.r * times)
    rows = np.arange(n)
    x_stop = ens.post[rows, s]
    gv = disc[s] * np.asarray(payoffs.g(t + times[s], x_stop), dtype=float)
    need = int(s.max()) if n else 0
    if need > 0:
        hv = np.asarray(payoffs.h(t + times[None, :need], ens.post[:, :need]), dtype=float)
        run = np.zeros((n, need + 1))
        run[:, 1:] = np.cumsum(hv * (disc[:need] * dt), axis=1)
        hsum = run[rows, s]
    else:
        hsum = np.zeros(n)
    csum = _cum_control_cost(sched, payoffs, t, f_variant)[s]
    return gv + hsum + csum


def payoff_one_path(path: SamplePath, control: ControlPath, stop_time: float, payoffs: PayoffSpec,
                    t: float = 0.0, f_variant=None, gamma: float = 1.0, d0: int | None = None) -> float:
    """Realised payoff of one simulated path stopped at ``stop_time``.

    Parameters
    ----------
    path : SamplePath
    control : ControlPath
        The control that generated ``path``.
    stop_time : float
        Must coincide with a grid time of ``path`` (relative to ``t``).
    payoffs : PayoffSpec
    t : float
        Absolute starting time.
    f_variant : None or float
        ``None`` uses ``f``; a number ``gamma`` uses ``f_gamma``.

    Raises
    ------
    ValueError
        If ``stop_time`` is not a grid time.
    """
    times = path.times
    dt = times[1] - times[0]
    k = int(np.round(stop_time / dt))
    if k < 0 or k >= len(times) or abs(times[k] - stop_time) > 1e-9 * max(dt, 1.0):
        raise ValueError(f"stop time {stop_time} is not on the simulation grid")
    d0 = control.d if d0 is None else d0
    sched = control_schedule(control, gamma, d0, dt, times[-1])
    ens = Ensemble(times, path.states_pre[None], path.states_post[None], path.path_index, path.noise_seed)
    return float(ensemble_payoffs(ens, sched, np.array([k]), payoffs, t, f_variant)[0])


def _value_minus_obstacle(value: Callable, payoffs: PayoffSpec, tt: np.ndarray, X: np.ndarray) -> np.ndarray:
    gap = getattr(value, "gap", None)
    if gap is not None:
        return np.asarray(gap(tt, X), dtype=float)
    return np.asarray(value(tt, X), dtype=float) - np.asarray(payoffs.g(tt, X), dtype=float)


def theta_star_indices(value: Callable, payoffs: PayoffSpec, ens: Ensemble, t: float,
                       tol_contact: float) -> np.ndarray:
    """Grid index of theta* for each path of ``ens`` (``M`` when no contact).

    ``value`` is a callable ``(t, x) -> v``; if it also has a ``gap(t, x)``
    method (as :class:`~sgl.pde.PdeSolution` does) that is used directly as
    the distance to the obstacle.
    """
    if not tol_contact > 0:
        raise ValueError("tol_contact must be positive")
    n, M1 = ens.post.shape[:2]
    tt = np.broadcast_to(t + ens.times[None, :], (n, M1))
    hit = _value_minus_obstacle(value, payoffs, tt, ens.post) <= tol_contact
    # left limits differ from the states only at jump times
    jumps = np.flatnonzero(np.any(ens.pre != ens.post, axis=(0, 2)))
    if jumps.size:
        hit[:, jumps] |= _value_minus_obstacle(value, payoffs, tt[:, jumps], ens.pre[:, jumps]) <= tol_contact
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), first, M1 - 1)


def realize_theta_star(value: Callable, payoffs: PayoffSpec, path: SamplePath, t: float,
                       tol_contact: float) -> float:
    """First grid time where the value touches the obstacle along ``path``.

    Contact is checked on the post-jump state (``tau*``) and on the left limit
    (``sigma*``); returns ``T - t`` (the last grid time) if there is none.
    """
    ens = Ensemble(path.times, path.states_pre[None], path.states_post[None], path.path_index,
                   path.noise_seed)
    k = int(theta_star_indices(value, payoffs, ens, t, tol_contact)[0])
    return float(path.times[k])


def _stop_indices(rule: StopRule, payoffs, ens: Ensemble, t: float) -> np.ndarray:
    if rule.kind == "fixed":
        dt = ens.times[1] - ens.times[0]
        k = int(np.round(rule.s / dt))
        if k > len(ens.times) - 1:
            raise ValueError("fixed stop beyond the horizon")
        return np.full(ens.n_paths, k, dtype=np.int64)
    return theta_star_indices(rule.value, payoffs, ens, t, rule.tol)


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(np.mean(values))
    if n < 2:
        return mean, float("inf")
    return mean, float(Z95 * np.std(values, ddof=1) / np.sqrt(n))


def estimate_value(model: SdeModel, payoffs: PayoffSpec, control: ControlPath, rule: StopRule, t: float,
                   x, gamma: float, n_paths: int, dt: float, seed: int, f_variant=None,
                   return_samples: bool = False):
    """Monte Carlo estimate of the payoff of ``(control, rule)`` from ``(t, x)``.

    Returns
    -------
    (mean, half_width)
        Sample mean and half-width of the 95% normal confidence interval.
        With ``return_samples=True`` the per-path payoffs are appended.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    horizon = payoffs.T - t
    if abs(control.horizon - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("control horizon must equal T - t")
    sched = control_schedule(control, gamma, model.d0, dt, horizon)
    parts = []
    for ens in iter_ensemble(model, control, x, gamma, dt, seed, n_paths, horizon=horizon):
        stop = _stop_indices(rule, payoffs, ens, t)
        parts.append(ensemble_payoffs(ens, sched, stop, payoffs, t, f_variant))
    samples = np.concatenate(parts)
    mean, hw = _mean_ci(samples)
    if return_samples:
        return mean, hw, samples
    return mean, hw


@dataclass(frozen=True)
class CrosscheckRow:
    control_id: int
    J_hat: float
    ci: float
    v_ref: float
    margin: float
    violated: bool


@dataclass(frozen=True)
class CrosscheckReport:
    """Per-control comparison of the payoff under theta* with the value."""

    rows: tuple[CrosscheckRow, ...] = field(default_factory=tuple)
    disc_tol: float = 0.0

    @property
    def violations(self) -> int:
        return sum(r.violated for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def crosscheck_optimality(v, payoffs: PayoffSpec, battery: Sequence[ControlPath], t: float, x,
                          n_paths: int, dt: float, seed: int, model: SdeModel | None = None,
                          disc_tol: float = 0.0, tol_contact: float | None = None,
                          v_ref: float | None = None) -> CrosscheckReport:
    """Check ``J(n, nu, theta*) >= v(t, x) - (3 CI + disc_tol)`` for each control.

    Parameters
    ----------
    v : PdeSolution or callable
        Value function used both to realise theta* and as reference.
    battery : sequence of ControlPath
        Constrained controls on ``[0, T - t]``.
    model : SdeModel, optional
        Defaults to ``v.model``.
    tol_contact : float, optional
        Contact tolerance; defaults to ``max(2 disc_tol, 1e-8)``.
    v_ref : float, optional
        Reference value; defaults to ``v(t, x)``.
    """
    model = model if model is not None else getattr(v, "model", None)
    if model is None:
        raise ValueError("a model is required")
    x = np.asarray(x, dtype=float)
    ref = float(v(np.array(t), x[None])[0]) if v_ref is None else float(v_ref)
    tol = tol_contact if tol_contact is not None else max(2.0 * disc_tol, 1e-8)
    rule = contact(v, tol)
    rows = []
    for i, ctrl in enumerate(battery):
        if not ctrl.in_constrained_class(model.d0):
            raise ValueError(f"battery control {i} is not constrained")
        J, ci = estimate_value(model, payoffs, ctrl, rule, t, x, 1.0, n_paths, dt,
                               derive_seed(seed, "crosscheck", i))
        margin = J - ref
        rows.append(CrosscheckRow(i, J, ci, ref, margin, bool(margin < -(3 * ci + disc_tol))))
    return CrosscheckReport(tuple(rows), disc_tol)
