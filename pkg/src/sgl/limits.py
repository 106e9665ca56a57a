"""Approximation chains: penalty/box continuation, gamma sweeps, mollification.

* :func:`continuation_solve` runs the penalised solver along decreasing
  ``(eps, delta)`` and increasing box radius ``m``, warm-starting each stage
  and logging sup-norm Cauchy differences on a fixed reference compact.
* :func:`gamma_sweep` repeats the continuation for a decreasing list of
  ``gamma`` and fits the log-log decay of the differences to the last one.
* :func:`mollify_truncate` builds the smoothed, truncated and localised
  payoffs ``(f^{j,k}, g^{j,k}, h^{j,k})``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import PayoffSpec, SdeModel
from .pde import Grid, PdeSolution, solve_penalised

__all__ = [
    "xi",
    "xi_prime",
    "cutoff_xi",
    "fit_rate",
    "SIGMA_FRAC",
    "sigma_mask",
    "continuation_solve",
    "SweepResult",
    "gamma_sweep",
    "mollify_truncate",
    "mollifier_nodes",
    "ScheduleWarning",
]

log = logging.getLogger(__name__)
SIGMA_FRAC = 0.6


class ScheduleWarning(UserWarning):
    """The Cauchy differences of a continuation did not decrease."""


def xi(z):
    """Smooth step: 1 for ``z <= 0``, 0 for ``z >= 1``, exponential blend between."""
    z = np.asarray(z, dtype=float)
    zi = np.clip(z, 1e-300, 1 - 1e-16)
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        # a / (a + b) with a = exp(1/(z-1)), b = exp(-1/z), written as a logistic
        mid = 1.0 / (1.0 + np.exp(1.0 / (1.0 - zi) - 1.0 / zi))
    out = np.where(z <= 0, 1.0, np.where(z >= 1, 0.0, mid))
    return float(out) if out.ndim == 0 else out


def xi_prime(z):
    """Derivative of :func:`xi` (closed form, zero outside ``(0, 1)``)."""
    z = np.asarray(z, dtype=float)
    zi = np.clip(z, 1e-3, 1 - 1e-3)
    s = xi(zi)
    out = -s * (1 - s) * (1.0 / (1.0 - zi) ** 2 + 1.0 / zi ** 2)
    out = np.where((z <= 0) | (z >= 1), 0.0, out)
    inner = (z > 0) & (z < 1) & ((z < 1e-3) | (z > 1 - 1e-3))
    out = np.where(inner, 0.0, out)  # the derivative is below 1e-300 there
    return float(out) if out.ndim == 0 else out


def cutoff_xi(k: float, x) -> np.ndarray | float:
    """``xi((|x| - k) / k)``: 1 on the ball of radius ``k``, 0 outside radius ``2k``."""
    if not k >= 1:
        raise ValueError("cut-off level k must be >= 1")
    x = np.asarray(x, dtype=float)
    return xi((np.linalg.norm(x, axis=-1) - k) / k)


def fit_rate(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares fit of ``log err = intercept + slope log param``.

    Returns ``(slope, intercept, residual)`` with ``residual`` the RMS of the
    log residuals.  Zero errors are dropped; if fewer than two positive errors
    remain the slope is ``+inf`` (intercept ``nan``).

    Raises
    ------
    ValueError
        On fewer than two points, nonpositive parameters or negative errors.

    Examples
    --------
    >>> round(fit_rate([(0.4, 0.8), (0.1, 0.2)])[0], 12)
    1.0
    """
    pts = [(float(p), float(e)) for p, e in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if any(p <= 0 or not math.isfinite(p) for p, _ in pts):
        raise ValueError("parameters must be positive")
    if any(e < 0 or not math.isfinite(e) for _, e in pts):
        raise ValueError("errors must be nonnegative")
    pos = [(p, e) for p, e in pts if e > 0]
    if len(pos) < 2:
        return math.inf, math.nan, 0.0
    lx = np.log([p for p, _ in pos])
    ly = np.log([e for _, e in pos])
    if np.ptp(lx) == 0:
        raise ValueError("parameters must not all be equal")
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([slope, intercept]) - ly) ** 2)))
    return float(slope), float(intercept), res


def sigma_mask(grid: Grid, frac: float = SIGMA_FRAC) -> np.ndarray:
    """Nodes of the reference compact: every coordinate within ``frac * m``."""
    return grid.inner_mask(frac)


def _broadcast_schedule(schedule: dict, m_default: float) -> list[tuple[float, float, float]]:
    eps = list(np.atleast_1d(schedule["eps"]).astype(float))
    delta = list(np.atleast_1d(schedule["delta"]).astype(float))
    m = list(np.atleast_1d(schedule.get("m", m_default)).astype(float))
    n = max(len(eps), len(delta), len(m))
    for name, seq in (("eps", eps), ("delta", delta), ("m", m)):
        if len(seq) not in (1, n):
            raise ValueError(f"schedule {name} must have length 1 or {n}")
    eps = eps * n if len(eps) == 1 else eps
    delta = delta * n if len(delta) == 1 else delta
    m = m * n if len(m) == 1 else m
    if n > 1:
        if any(b >= a for a, b in zip(eps, eps[1:]) if len(set(eps)) > 1) or \
                any(b >= a for a, b in zip(delta, delta[1:]) if len(set(delta)) > 1):
            raise ValueError("eps and delta schedules must be strictly decreasing")
        if any(b < a for a, b in zip(m, m[1:])):
            raise ValueError("box radius schedule must be nondecreasing")
    return list(zip(eps, delta, m))


def continuation_solve(model: SdeModel, payoffs: PayoffSpec, grid: Grid, gamma: float, schedule: dict,
                       cauchy_tol: float = 1e-3, warm_start: bool = True, **solver_kw) -> PdeSolution:
    """Solve along a schedule of ``(eps, delta, m)`` and return the last solution.

    Parameters
    ----------
    schedule : dict
        ``{"eps": [...], "delta": [...], "m": [...]}``; entries of length one
        are broadcast; ``m`` defaults to ``grid.m``.
    cauchy_tol : float
        Convergence is declared when the last Cauchy difference is below it.

    Returns
    -------
    PdeSolution
        With ``log["cauchy"]`` (differences between consecutive stages on the
        reference compact of the first stage), ``log["converged"]`` and
        ``log["stages"]``.
    """
    stages = _broadcast_schedule(schedule, grid.m)
    ref_grid = Grid(stages[0][2], grid.nx, grid.nt, grid.d)
    mask = sigma_mask(ref_grid)
    pts = ref_grid.nodes()[mask]
    prev_vals = None
    prev_sol = None
    cauchy = []
    sol = None
    for eps, delta, m in stages:
        g = Grid(m, grid.nx, grid.nt, grid.d)
        init = None
        if warm_start and prev_sol is not None:
            if m == prev_sol.grid.m:
                init = prev_sol.values
            else:
                X = g.nodes()
                init = np.stack([prev_sol(np.full(g.shape, t), X) for t in prev_sol.times])
        sol = solve_penalised(model, payoffs, g, eps, delta, gamma, initial=init, **solver_kw)
        vals = np.stack([sol(np.full(len(pts), t), pts) for t in sol.times]) if m != ref_grid.m \
            else sol.values[:, mask]
        if prev_vals is not None:
            cauchy.append(float(np.max(np.abs(vals - prev_vals))))
        prev_vals, prev_sol = vals, sol
    if len(cauchy) >= 3 and not (cauchy[-1] <= cauchy[-2] <= cauchy[-3]):
        warnings.warn("Cauchy differences are not monotone over the last steps; schedule may be too "
                      "aggressive", ScheduleWarning, stacklevel=2)
    sol.log["cauchy"] = cauchy
    sol.log["converged"] = bool(cauchy[-1] < cauchy_tol) if cauchy else True
    sol.log["stages"] = stages
    return sol


@dataclass
class SweepResult:
    """Outcome of :func:`gamma_sweep`."""

    params: list[float]
    errors: list[float]
    slope: float
    intercept: float
    residual: float
    solutions: list[PdeSolution] = field(default_factory=list, repr=False)
    cauchy: list[list[float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["param,err"]
        lines += [f"{p!r},{e!r}" for p, e in zip(self.params, self.errors)]
        lines.append(f"slope,{self.slope!r}")
        lines.append(f"intercept,{self.intercept!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return dict(params=self.params, errors=self.errors, slope=self.slope,
                    intercept=self.intercept, residual=self.residual, cauchy=self.cauchy)


def gamma_sweep(model: SdeModel, payoffs: PayoffSpec, grid: Grid, gammas: Sequence[float], schedule: dict,
                keep_solutions: bool = False, **kw) -> SweepResult:
    """Continuation solves for each ``gamma`` and the rate of ``u^gamma -> u^{gamma_last}``.

    ``e_i`` is the sup-norm difference on the reference compact (central 60%
    of the final box, all times); the slope is fitted over all but the last
    gamma.
    """
    gammas = [float(g) for g in gammas]
    if len(gammas) < 3:
        raise ValueError("need at least three gamma values")
    if any(not 0 < g <= 1 for g in gammas) or any(b >= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be strictly decreasing in (0, 1]")
    sols = [continuation_solve(model, payoffs, grid, g, schedule, **kw) for g in gammas]
    mask = sigma_mask(sols[-1].grid)
    ref = sols[-1].values[:, mask]
    errors = [float(np.max(np.abs(s.values[:, mask] - ref))) for s in sols[:-1]]
    slope, intercept, res = fit_rate(list(zip(gammas[:-1], errors)))
    return SweepResult(gammas[:-1], errors, slope, intercept, res,
                       sols if keep_solutions else [], [s.log.get("cauchy", []) for s in sols])


# ---------------------------------------------------------------------------
# mollification / truncation / cut-off

def mollifier_nodes(j: int, d: int, oversample: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights of the bump mollifier of radius ``1/j`` in ``(t, x)``.

    Nodes lie on a tensor grid of spacing ``1 / (j * oversample)`` inside the
    ball; weights are proportional to ``exp(-1 / (1 - |z|^2))`` and sum to one.
    """
    r = 1.0 / j
    ax = np.linspace(-r, r, 2 * oversample + 1)
    mesh = np.stack(np.meshgrid(*([ax] * (d + 1)), indexing="ij"), axis=-1).reshape(-1, d + 1)
    rho2 = np.sum(mesh ** 2, axis=-1) / (r * r)
    keep = rho2 < 1 - 1e-12
    nodes = mesh[keep]
    w = np.exp(-1.0 / (1.0 - rho2[keep]))
    return nodes, w / w.sum()


def mollify_truncate(payoffs: PayoffSpec, j: int, k: float, m_trunc: float, d: int,
                     c_j: float | None = None, oversample: int = 4, g_sup: float | None = None,
                     sup_samples: int = 4000, seed: int = 0) -> PayoffSpec:
    """Smoothed, truncated and localised payoffs.

    ``g^{j,k} = (min(g, m_trunc) * zeta_j) xi_k``, likewise ``h``, and
    ``f^{j,k} = (f + c_j) * zeta_j + (2/k) ||g_m||``.  The convolution is a
    fixed positive-weight quadrature shared by ``f``, ``g`` and ``h``, so the
    gradient bound ``|grad_0 g| <= f`` carries over to the smoothed functions.
    Time arguments outside ``[0, T]`` are clamped (constant extension).

    Parameters
    ----------
    j, k : int, float
        Smoothing and cut-off levels (``>= 1``).
    m_trunc : float
        Truncation height.
    d : int
        State dimension.
    c_j : float, optional
        Positive shift of ``f``; defaults to ``1 / j``.
    g_sup : float, optional
        Upper bound for ``sup min(g, m_trunc)`` on the support of the
        cut-off; by default estimated from samples plus a Lipschitz margin
        ``K * spacing``, and capped by ``m_trunc``.
    """
    if j < 1 or k < 1:
        raise ValueError("j and k must be >= 1")
    if not m_trunc > 0:
        raise ValueError("truncation height must be positive")
    c_j = 1.0 / j if c_j is None else float(c_j)
    T = payoffs.T
    nodes, w = mollifier_nodes(j, d, oversample)
    tau, ys = nodes[:, 0], nodes[:, 1:]

    def clamp(t):
        return np.clip(t, 0.0, T)

    def g_m(t, x):
        return np.minimum(np.asarray(payoffs.g(clamp(t), x), dtype=float), m_trunc)

    def h_m(t, x):
        return np.minimum(np.asarray(payoffs.h(clamp(t), x), dtype=float), m_trunc)

    def conv(fn, t, x):
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(t))
        tt = np.broadcast_to(np.asarray(t, dtype=float), shape)
        xx = np.broadcast_to(x, shape + (d,))
        out = np.zeros(shape)
        for q in range(len(w)):
            out += w[q] * fn(tt - tau[q], xx - ys[q])
        return out

    def f_j(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.shape(t))
        for q in range(len(w)):
            out += w[q] * (np.asarray(payoffs.f(clamp(t - tau[q])), dtype=float) + c_j)
        return out

    if g_sup is None:
        rng = np.random.default_rng(seed)
        radius = 2 * k + 1.0 / j
        side = max(2, int(round(sup_samples ** (1.0 / (d + 1)))))
        axes = [np.linspace(0, T, side)] + [np.linspace(-radius, radius, side)] * d
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d + 1)
        rand = np.column_stack([rng.random(sup_samples) * T,
                                (rng.random((sup_samples, d)) * 2 - 1) * radius])
        pts = np.vstack([mesh, rand])
        spacing = max(T, 2 * radius) / (side - 1)
        est = float(np.max(g_m(pts[:, 0], pts[:, 1:])))
        g_sup = min(m_trunc, est + payoffs.K * spacing * np.sqrt(d + 1) / 2)
    g_sup = max(0.0, float(g_sup))
    extra = 2.0 / k * g_sup

    def f_jk(t):
        return f_j(t) + extra

    def g_jk(t, x):
        return conv(g_m, t, x) * cutoff_xi(k, x)

    def h_jk(t, x):
        return conv(h_m, t, x) * cutoff_xi(k, x)

    K1 = max(payoffs.K1, 2 * m_trunc)
    return PayoffSpec(f=f_jk, g=g_jk, h=h_jk, r=payoffs.r, T=T, K1=K1, beta=payoffs.beta,
                      K=payoffs.K, name=f"{payoffs.name}-mollified-j{j}-k{k:g}")
