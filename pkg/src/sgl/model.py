"""SDE models, payoff specifications and sampled checks of their assumptions.

An :class:`SdeModel` bundles the drift ``b`` and diffusion ``kappa`` of

    dX = b(X) dt + kappa(X) dW + n dnu,

with ``d = d0 + d1`` state coordinates of which the first ``d0`` are
controlled.  A :class:`PayoffSpec` holds the control cost rate ``f``, the
stopping payoff ``g``, the running payoff ``h`` and the discount rate ``r``.

Both are plain containers of vectorised callables.  Their standing
assumptions (Lipschitz coefficients, a diffusion row depending only on its
own coordinate, ellipticity, nonincreasing ``f``, sublinear growth and the
gradient bound ``|grad_0 g| <= f``) are checked by :func:`validate_model` and
:func:`validate_payoffs` through random sampling and central finite
differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import ExpressionError, compile_expression

__all__ = [
    "ModelError",
    "AffineDiagonal",
    "SdeModel",
    "PayoffSpec",
    "ClauseResult",
    "ValidationReport",
    "brownian",
    "geometric",
    "ornstein_uhlenbeck",
    "model_from_expressions",
    "model_from_config",
    "payoffs_from_config",
    "make_payoffs",
    "validate_model",
    "validate_payoffs",
    "f_gamma",
    "as_box",
]


class ModelError(ValueError):
    """Invalid model/payoff definition or a hard assumption failure."""


@dataclass(frozen=True)
class AffineDiagonal:
    """Coefficients ``b_i = alpha_i + beta_i x_i`` and ``kappa_ii = c_i + s_i x_i``.

    Models with this structure are simulated by the fused Euler kernel.
    """

    alpha: np.ndarray
    beta: np.ndarray
    c: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class SdeModel:
    """Controlled diffusion coefficients.

    Parameters
    ----------
    d, d0, d1, dprime : int
        State dimension, controlled coordinates, uncontrolled coordinates and
        noise dimension; ``d = d0 + d1 <= dprime``.
    drift : callable
        ``x -> b(x)``, shape ``(..., d) -> (..., d)``.
    diffusion : callable
        ``x -> kappa(x)``, shape ``(..., d) -> (..., d, dprime)``.
    D1 : float
        Bound on the partial derivatives of ``b`` and ``kappa``.
    D2 : float
        Linear growth constant, ``|b(x)| + |kappa(x)| <= D2 (1 + |x|)``.
    affine : AffineDiagonal, optional
        Set by the built-in models to enable the compiled simulation kernel.
    """

    d: int
    d0: int
    d1: int
    dprime: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    D1: float
    D2: float
    affine: AffineDiagonal | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.d < 1 or self.d0 < 1 or self.d1 < 0:
            raise ModelError("need d >= 1, d0 >= 1 and d1 >= 0")
        if self.d != self.d0 + self.d1:
            raise ModelError(f"d = {self.d} must equal d0 + d1 = {self.d0 + self.d1}")
        if self.dprime < self.d:
            raise ModelError(f"noise dimension dprime = {self.dprime} must be >= d = {self.d}")
        if self.D1 < 0 or self.D2 < 0:
            raise ModelError("D1 and D2 must be nonnegative")

    def covariance(self, x: np.ndarray) -> np.ndarray:
        """Return ``a(x) = kappa(x) kappa(x)^T`` with shape ``(..., d, d)``."""
        k = self.diffusion(x)
        return k @ np.swapaxes(k, -1, -2)


@dataclass(frozen=True)
class PayoffSpec:
    """Payoff ingredients of the game.

    ``f(t)`` is the cost per unit of control, ``g(t, x)`` the stopping payoff
    (the obstacle), ``h(t, x)`` the running payoff rate, ``r >= 0`` the discount
    rate and ``T`` the horizon.  ``K1`` and ``beta`` give the growth bound
    ``g + h <= K1 (1 + |x|^beta)``; ``K`` is the Lipschitz constant that also
    enters ``f_gamma``.  Callables are vectorised: ``x`` has shape ``(..., d)``.
    """

    f: Callable
    g: Callable
    h: Callable
    r: float
    T: float
    K1: float = 0.0
    beta: float = 0.0
    K: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if self.r < 0:
            raise ModelError("negative discount rates are not supported (fold them into h, g, f)")
        if not self.T > 0:
            raise ModelError("horizon T must be positive")
        if self.K1 < 0 or self.K < 0:
            raise ModelError("K1 and K must be nonnegative")
        if not 0 <= self.beta < 1:
            raise ModelError("beta must lie in [0, 1)")


def f_gamma(payoffs: PayoffSpec, gamma: float, t) -> np.ndarray | float:
    """Relaxed control cost ``sqrt(f(t)^2 + gamma K^2)``.

    Examples
    --------
    >>> p = make_payoffs(f=1.0, g=0.0, h=0.0, r=0.0, T=1.0, K=2.0)
    >>> round(float(f_gamma(p, 0.25, 0.3)), 8)
    1.41421356
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-12) or np.any(t_arr > payoffs.T + 1e-12):
        raise ValueError("t outside [0, T]")
    fv = np.asarray(payoffs.f(t_arr), dtype=float)
    out = np.sqrt(fv * fv + gamma * payoffs.K ** 2)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# built-in models

def _vec(v, d, name) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(v, dtype=float), (d,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"parameter {name} must be finite")
    return arr


def _affine_model(name, d, d0, dprime, aff: AffineDiagonal, D1, D2) -> SdeModel:
    dprime = d if dprime is None else int(dprime)
    alpha, beta, c, s = aff.alpha, aff.beta, aff.c, aff.s

    def drift(x):
        x = np.asarray(x, dtype=float)
        return alpha + beta * x

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        diag = c + s * x
        out = np.zeros(x.shape[:-1] + (d, dprime))
        idx = np.arange(d)
        out[..., idx, idx] = diag
        return out

    return SdeModel(d=d, d0=d0, d1=d - d0, dprime=dprime, drift=drift, diffusion=diffusion,
                    D1=float(D1), D2=float(D2), affine=aff, name=name)


def brownian(d: int = 1, d0: int | None = None, sigma=1.0, dprime: int | None = None) -> SdeModel:
    """Scaled Brownian motion ``dX = sigma dW`` (``b = 0``, ``kappa = diag(sigma)``)."""
    d0 = d if d0 is None else d0
    sig = _vec(sigma, d, "sigma")
    z = np.zeros(d)
    aff = AffineDiagonal(alpha=z, beta=z.copy(), c=sig, s=z.copy())
    return _affine_model("brownian", d, d0, dprime, aff, 0.0, float(np.linalg.norm(sig)))


def geometric(d: int = 1, d0: int | None = None, mu=0.0, sigma=0.2, dprime: int | None = None) -> SdeModel:
    """Geometric Brownian motion ``dX_i = mu_i X_i dt + sigma_i X_i dW_i``."""
    d0 = d if d0 is None else d0
    m = _vec(mu, d, "mu")
    sig = _vec(sigma, d, "sigma")
    z = np.zeros(d)
    aff = AffineDiagonal(alpha=z, beta=m, c=z.copy(), s=sig)
    D1 = float(max(np.max(np.abs(m)), np.max(np.abs(sig))))
    D2 = float(np.max(np.abs(m)) + np.max(np.abs(sig)))
    return _affine_model("geometric", d, d0, dprime, aff, D1, D2)


def ornstein_uhlenbeck(d: int = 1, d0: int | None = None, theta=1.0, mean=0.0, sigma=1.0,
                       dprime: int | None = None) -> SdeModel:
    """Ornstein-Uhlenbeck process ``dX_i = theta_i (mean_i - X_i) dt + sigma_i dW_i``."""
    d0 = d if d0 is None else d0
    th = _vec(theta, d, "theta")
    mu = _vec(mean, d, "mean")
    sig = _vec(sigma, d, "sigma")
    if np.any(th < 0):
        raise ModelError("theta must be nonnegative")
    z = np.zeros(d)
    aff = AffineDiagonal(alpha=th * mu, beta=-th, c=sig, s=z)
    D1 = float(np.max(th))
    D2 = float(np.max(th) * max(1.0, np.linalg.norm(mu)) + np.linalg.norm(sig))
    return _affine_model("ornstein-uhlenbeck", d, d0, dprime, aff, D1, D2)


def model_from_expressions(d: int, d0: int, drift: Sequence[str], diffusion: Sequence[Sequence[str]],
                           D1: float, D2: float, dprime: int | None = None) -> SdeModel:
    """Build a model from expression strings in ``x1 .. xd``.

    ``drift`` has ``d`` entries and ``diffusion`` is a ``d x dprime`` nested list.
    """
    if len(drift) != d:
        raise ModelError(f"drift needs {d} components, got {len(drift)}")
    if len(diffusion) != d:
        raise ModelError(f"diffusion needs {d} rows, got {len(diffusion)}")
    dprime = len(diffusion[0]) if dprime is None else int(dprime)
    if any(len(row) != dprime for row in diffusion):
        raise ModelError("diffusion rows must all have dprime entries")
    try:
        b_exprs = [compile_expression(e, d) for e in drift]
        k_exprs = [[compile_expression(e, d) for e in row] for row in diffusion]
    except ExpressionError as exc:
        raise ModelError(str(exc)) from None

    def drift_fn(x):
        x = np.asarray(x, dtype=float)
        return np.stack([e(0.0, x) for e in b_exprs], axis=-1)

    def diffusion_fn(x):
        x = np.asarray(x, dtype=float)
        rows = [np.stack([e(0.0, x) for e in row], axis=-1) for row in k_exprs]
        return np.stack(rows, axis=-2)

    return SdeModel(d=d, d0=d0, d1=d - d0, dprime=dprime, drift=drift_fn,
                    diffusion=diffusion_fn, D1=float(D1), D2=float(D2), name="expression")


_BUILTIN_MODELS = {
    "brownian": (brownian, {"sigma", "dprime"}),
    "geometric": (geometric, {"mu", "sigma", "dprime"}),
    "ornstein-uhlenbeck": (ornstein_uhlenbeck, {"theta", "mean", "sigma", "dprime"}),
}


def model_from_config(cfg: dict) -> SdeModel:
    """Create a model from a config section.

    Either ``{"builtin": name, "d": .., "d0": .., <params>}`` or
    ``{"d": .., "d0": .., "drift": [...], "diffusion": [[...]], "D1": .., "D2": ..}``.
    """
    if not isinstance(cfg, dict):
        raise ModelError("model section must be an object")
    try:
        d = int(cfg.get("d", 1))
        d0 = int(cfg.get("d0", d))
    except (TypeError, ValueError):
        raise ModelError("d and d0 must be integers") from None
    if "builtin" in cfg:
        name = cfg["builtin"]
        if name not in _BUILTIN_MODELS:
            raise ModelError(f"unknown built-in model {name!r}; choose from {sorted(_BUILTIN_MODELS)}")
        fn, allowed = _BUILTIN_MODELS[name]
        params = {k: v for k, v in cfg.items() if k not in ("builtin", "d", "d0")}
        unknown = set(params) - allowed
        if unknown:
            raise ModelError(f"unknown parameters {sorted(unknown)} for model {name!r}")
        try:
            return fn(d=d, d0=d0, **params)
        except (TypeError, ValueError) as exc:
            raise ModelError(f"bad parameters for model {name!r}: {exc}") from None
    for key in ("drift", "diffusion", "D1", "D2"):
        if key not in cfg:
            raise ModelError(f"expression model needs key {key!r}")
    return model_from_expressions(d, d0, cfg["drift"], cfg["diffusion"], cfg["D1"], cfg["D2"],
                                  cfg.get("dprime"))


# ---------------------------------------------------------------------------
# payoffs

def _space_fn(spec, d: int, what: str) -> Callable:
    """Turn a payoff config entry into a callable ``(t, x) -> (...)``."""
    if callable(spec):
        return spec
    if isinstance(spec, dict):
        name = spec.get("builtin")
        coord = int(spec.get("coordinate", 1)) - 1
        if not 0 <= coord < d:
            raise ModelError(f"{what}: coordinate out of range")
        if name == "put":
            k = float(spec["strike"])
            return lambda t, x: np.maximum(k - np.asarray(x, dtype=float)[..., coord], 0.0) \
                + 0.0 * np.asarray(t, dtype=float)
        if name == "call":
            k = float(spec["strike"])
            return lambda t, x: np.maximum(np.asarray(x, dtype=float)[..., coord] - k, 0.0) \
                + 0.0 * np.asarray(t, dtype=float)
        if name == "quadratic":
            center = np.broadcast_to(np.asarray(spec.get("center", 0.0), dtype=float), (d,)).copy()
            scale = float(spec.get("scale", 1.0))
            cap = float(spec.get("cap", np.inf))

            def quad(t, x):
                x = np.asarray(x, dtype=float)
                q = scale * np.sum((x - center) ** 2, axis=-1)
                return np.minimum(q, cap) + 0.0 * np.asarray(t, dtype=float)
            return quad
        raise ModelError(f"{what}: unknown built-in payoff {name!r}")
    try:
        e = compile_expression(spec, d)
    except ExpressionError as exc:
        raise ModelError(f"{what}: {exc}") from None
    return lambda t, x: e(t, x)


def _time_fn(spec, what: str) -> Callable:
    if callable(spec):
        return spec
    try:
        e = compile_expression(spec, 0)
    except ExpressionError as exc:
        raise ModelError(f"{what}: {exc}") from None
    return lambda t: e(t)


def make_payoffs(f, g, h, r: float, T: float, K1: float = 0.0, beta: float = 0.0,
                 K: float = 0.0, d: int = 1, name: str = "custom") -> PayoffSpec:
    """Build a :class:`PayoffSpec` from callables, numbers, expression strings or built-ins."""
    return PayoffSpec(f=_time_fn(f, "f"), g=_space_fn(g, d, "g"), h=_space_fn(h, d, "h"),
                      r=float(r), T=float(T), K1=float(K1), beta=float(beta), K=float(K), name=name)


def payoffs_from_config(cfg: dict, d: int) -> PayoffSpec:
    """Create payoffs from a config section with keys f, g, h, r, T, K1, beta, K."""
    if not isinstance(cfg, dict):
        raise ModelError("payoffs section must be an object")
    for key in ("f", "g", "h", "r", "T"):
        if key not in cfg:
            raise ModelError(f"payoffs section needs key {key!r}")
    try:
        return make_payoffs(cfg["f"], cfg["g"], cfg["h"], cfg["r"], cfg["T"],
                            cfg.get("K1", 0.0), cfg.get("beta", 0.0), cfg.get("K", 0.0), d=d,
                            name=cfg.get("name", "config"))
    except (TypeError, KeyError) as exc:
        raise ModelError(f"bad payoff definition: {exc}") from None


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class ClauseResult:
    """Outcome of one sampled assumption check."""

    name: str
    passed: bool
    worst: float
    detail: str = ""
    advisory: bool = False

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "worst", float(self.worst))


@dataclass(frozen=True)
class ValidationReport:
    """Collection of :class:`ClauseResult`; ``passed`` ignores advisory clauses."""

    subject: str
    clauses: tuple[ClauseResult, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses if not c.advisory)

    def clause(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def rows(self) -> list[dict]:
        return [dict(subject=self.subject, clause=c.name, passed=c.passed, worst=c.worst,
                     advisory=c.advisory, detail=c.detail) for c in self.clauses]


def as_box(box, d: int) -> np.ndarray:
    """Normalise a box to an array of shape ``(d, 2)`` of (low, high) pairs.

    Accepts a scalar radius ``m`` (meaning ``[-m, m]^d``), a single pair
    ``(lo, hi)`` applied to every axis, or a per-axis list of pairs.
    """
    arr = np.asarray(box, dtype=float)
    if arr.ndim == 0:
        arr = np.array([[-float(arr), float(arr)]] * d)
    elif arr.shape == (2,):
        arr = np.tile(arr, (d, 1))
    if arr.shape != (d, 2):
        raise ValueError(f"box must describe {d} axes")
    if np.any(arr[:, 1] < arr[:, 0]):
        raise ValueError("box is empty")
    return arr


def _sample_points(box: np.ndarray, samples: int, rng: np.random.Generator) -> np.ndarray:
    d = box.shape[0]
    lo, hi = box[:, 0], box[:, 1]
    pts = [lo + (hi - lo) * rng.random((samples, d)), ((lo + hi) / 2)[None, :]]
    if d <= 10:
        corners = np.array(np.meshgrid(*[[a, b] for a, b in box], indexing="ij")).reshape(d, -1).T
        pts.append(corners)
    return np.concatenate(pts, axis=0)


def _check_finite(values: np.ndarray, pts: np.ndarray, what: str) -> None:
    vals = values.reshape(values.shape[0], -1)
    bad = ~np.all(np.isfinite(vals), axis=1)
    if np.any(bad):
        p = pts[np.argmax(bad)]
        raise ModelError(f"{what} is not finite at x = {p.tolist()}")


def _fd_jacobian(fn, pts: np.ndarray) -> np.ndarray:
    """Central-difference derivatives; result shape ``(n, d, *out_shape)``."""
    n, d = pts.shape
    hstep = 1e-5 * np.maximum(1.0, np.abs(pts))
    out = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        hp = hstep[:, j:j + 1]
        plus = fn(pts + hp * e)
        minus = fn(pts - hp * e)
        hj = hstep[:, j].reshape((n,) + (1,) * (plus.ndim - 1))
        out.append((plus - minus) / (2 * hj))
    return np.stack(out, axis=1)


def validate_model(model: SdeModel, box, samples: int = 200, seed: int = 0) -> ValidationReport:
    """Check the standing assumptions on ``model`` over ``box`` by sampling.

    Clauses reported: ``i_derivative_bound`` (finite-difference derivatives of
    ``b`` and ``kappa`` at most ``D1``), ``i_linear_growth``, ``ii_row_dependence``
    (row ``i`` of ``kappa`` depends on ``x_i`` only) and ``iii_ellipticity``
    (smallest eigenvalue of ``kappa kappa^T``, reported as ``worst``).  Box
    corners and the centre are always sampled in addition to random points.

    Raises
    ------
    ModelError
        If a coefficient evaluates to a non-finite number at a sample point.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    d = model.d
    box = as_box(box, d)
    rng = np.random.default_rng(seed)
    pts = _sample_points(box, samples, rng)
    b = np.asarray(model.drift(pts), dtype=float)
    k = np.asarray(model.diffusion(pts), dtype=float)
    _check_finite(b, pts, "drift")
    _check_finite(k, pts, "diffusion")
    clauses = []

    db = _fd_jacobian(lambda p: np.asarray(model.drift(p), dtype=float), pts)
    dk = _fd_jacobian(lambda p: np.asarray(model.diffusion(p), dtype=float), pts)
    d1_est = float(max(np.max(np.abs(db)), np.max(np.abs(dk))))
    scale = float(max(np.max(np.abs(b)), np.max(np.abs(k)), 1.0))
    fd_tol = 1e-6 * (1.0 + model.D1) + 1e-9 * scale
    clauses.append(ClauseResult("i_derivative_bound", d1_est <= model.D1 + fd_tol, d1_est,
                                f"max sampled |derivative| = {d1_est:.6g}, D1 = {model.D1:.6g}"))

    norms = np.linalg.norm(b, axis=-1) + np.sqrt(np.sum(k * k, axis=(-1, -2)))
    growth = norms / (1.0 + np.linalg.norm(pts, axis=-1))
    g_worst = float(np.max(growth))
    clauses.append(ClauseResult("i_linear_growth", g_worst <= model.D2 * (1 + 1e-12) + 1e-12, g_worst,
                                f"max (|b|+|kappa|)/(1+|x|) = {g_worst:.6g}, D2 = {model.D2:.6g}"))

    worst_row = 0.0
    where = ""
    if d > 1:
        for j in range(d):
            moved = pts.copy()
            moved[:, j] = rng.uniform(box[j, 0], box[j, 1], len(pts))
            km = np.asarray(model.diffusion(moved), dtype=float)
            for i in range(d):
                if i == j:
                    continue
                diff = np.max(np.abs(km[:, i, :] - k[:, i, :]), axis=-1)
                if diff.max() > worst_row:
                    worst_row = float(diff.max())
                    where = f"row {i + 1} changes with x{j + 1}"
    row_tol = 1e-12 * scale
    clauses.append(ClauseResult("ii_row_dependence", worst_row <= row_tol, worst_row, where))

    a = k @ np.swapaxes(k, -1, -2)
    eig = np.linalg.eigvalsh(a)[:, 0]
    theta_b = float(np.min(eig))
    x_at = pts[int(np.argmin(eig))].tolist()
    clauses.append(ClauseResult("iii_ellipticity", theta_b > 1e-14 * scale ** 2, theta_b,
                                f"smallest eigenvalue of kappa kappa^T at x = {x_at}"))
    return ValidationReport("model", tuple(clauses))


def validate_payoffs(payoffs: PayoffSpec, model: SdeModel, box, samples: int = 200,
                     seed: int = 0) -> ValidationReport:
    """Check the payoff assumptions on ``box x [0, T]`` by sampling.

    Clauses: ``positivity`` (g, h >= 0), ``i_f_nonincreasing``, ``ii_growth``
    (``g + h <= K1 (1 + |x|^beta)``), ``iii_gradient`` (``|grad_0 g| <= f`` by
    central differences over the first ``d0`` coordinates) and the advisory
    ``lipschitz_K`` consistency check of the user constant ``K``.

    Raises
    ------
    ModelError
        If ``f`` is not strictly positive on the sampled times, or a payoff
        evaluates to a non-finite number.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    d, d0, T = model.d, model.d0, payoffs.T
    box = as_box(box, d)
    rng = np.random.default_rng(seed)
    pts = _sample_points(box, samples, rng)
    n = pts.shape[0]
    ts = rng.random(n) * T
    ts[: min(n, 2)] = [0.0, T][: min(n, 2)]
    tgrid = np.linspace(0.0, T, 201)
    fv = np.asarray(payoffs.f(tgrid), dtype=float) * np.ones_like(tgrid)
    if not np.all(np.isfinite(fv)):
        raise ModelError("f is not finite on [0, T]")
    if np.any(fv <= 0):
        t_bad = float(tgrid[np.argmax(fv <= 0)])
        raise ModelError(f"f must be strictly positive; f({t_bad:.6g}) = {fv[np.argmax(fv <= 0)]:.6g}")
    gv = np.asarray(payoffs.g(ts, pts), dtype=float)
    hv = np.asarray(payoffs.h(ts, pts), dtype=float)
    _check_finite(gv[:, None], pts, "g")
    _check_finite(hv[:, None], pts, "h")
    clauses = []

    neg = float(max(0.0, -gv.min(), -hv.min()))
    clauses.append(ClauseResult("positivity", neg == 0.0, neg, "largest negative value of g or h"))

    rise = float(max(0.0, np.max(np.diff(fv))))
    clauses.append(ClauseResult("i_f_nonincreasing", rise <= 1e-12 * max(1.0, np.max(fv)), rise,
                                "largest increase of f between consecutive sampled times"))

    bound = payoffs.K1 * (1.0 + np.linalg.norm(pts, axis=-1) ** payoffs.beta)
    excess = gv + hv - bound
    g_worst = float(np.max(excess))
    clauses.append(ClauseResult("ii_growth", g_worst <= 1e-12 * max(1.0, np.max(bound)), g_worst,
                                "max of g + h - K1 (1 + |x|^beta)"))

    grad = _fd_jacobian(lambda p: np.asarray(payoffs.g(ts, p), dtype=float), pts)[:, :d0]
    gnorm = np.linalg.norm(grad, axis=1)
    ft = np.asarray(payoffs.f(ts), dtype=float) * np.ones(n)
    fd_tol = 1e-6 * (1.0 + np.max(np.abs(gv)))
    gexcess = gnorm - ft
    gw = float(np.max(gexcess))
    at = int(np.argmax(gexcess))
    clauses.append(ClauseResult("iii_gradient", bool(gw <= fd_tol), gw,
                                f"max |grad_0 g| - f at t = {ts[at]:.6g}, x = {pts[at].tolist()}"))

    widths = box[:, 1] - box[:, 0]
    step = 0.05 * np.maximum(widths, 1e-12) * (rng.random((n, d)) - 0.5)
    dt_ = 0.05 * T * (rng.random(n) - 0.5)
    pts2 = np.clip(pts + step, box[:, 0], box[:, 1])
    ts2 = np.clip(ts + dt_, 0.0, T)
    dv = np.abs(np.asarray(payoffs.g(ts2, pts2)) - gv) + np.abs(np.asarray(payoffs.h(ts2, pts2)) - hv)
    dist = np.linalg.norm(pts2 - pts, axis=-1) + np.abs(ts2 - ts)
    ratio = np.where(dist > 0, dv / np.where(dist > 0, dist, 1.0), 0.0)
    lw = float(np.max(ratio))
    clauses.append(ClauseResult("lipschitz_K", lw <= payoffs.K * (1 + 1e-6) + 1e-9, lw,
                                f"sampled Lipschitz ratio vs K = {payoffs.K:.6g}", advisory=True))
    return ValidationReport("payoffs", tuple(clauses))
