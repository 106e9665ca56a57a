"""Finite-difference solver for the penalised game equation on a box.

Solves, backward in time on ``[0, T] x [-m, m]^d`` (``d <= 2``),

    u_t + L u - r u = -h - (1/delta) (g - u)^+ + psi_eps(|grad u|_gamma^2 - f_gamma^2),

with ``u = 0`` on the boundary and ``u(T) = g(T) xi_k`` where ``xi_k`` is the
smooth cut-off of :func:`sgl.limits.cutoff_xi` with ``k = m / 2``.  Here
``L = 1/2 sum a_ij d_ij + sum b_i d_i`` with ``a = kappa kappa^T`` and
``|p|_gamma^2 = |p_[d0]|^2 + gamma |p_[d1]|^2``.

Discretisation
--------------
Each time slice is fully implicit.  ``L - r`` is a monotone stencil (central
drift where that keeps the stencil monotone, upwind otherwise; a
sign-adapted 7-point cross-derivative stencil in 2D).  The gradient inside
the penalty is the monotone upwind form ``max(D^- u, -D^+ u, 0)`` per axis.
The nonlinear slice equation is solved by semismooth Newton sweeps: at every
sweep the obstacle indicator and the penalty are linearised at the current
iterate, which gives an M-matrix, so the scheme is monotone for any
``ht``.  ``scheme="picard"`` instead freezes both penalties at the previous
sweep (explicit penalties, implicit ``L``) and sub-steps so that ``ht < delta``.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import bicgstab, spsolve

from .model import PayoffSpec, SdeModel, f_gamma

__all__ = [
    "Grid",
    "PdeSolution",
    "SolverError",
    "psi_eps",
    "hamiltonian",
    "solve_penalised",
    "vi_residual",
    "extract_regions",
    "RegionMap",
    "write_grid",
    "read_grid",
    "export_csv",
    "central_gradient",
    "GRID_MAGIC",
]

log = logging.getLogger(__name__)
GRID_MAGIC = b"SGVI"
GRID_VERSION = 1


class SolverError(RuntimeError):
    """Slice iteration failed; ``worst_residual`` and ``slice_index`` locate the failure."""

    def __init__(self, message: str, worst_residual: float, slice_index: int):
        super().__init__(message)
        self.worst_residual = worst_residual
        self.slice_index = slice_index


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-m, m]^d`` with ``nx`` points per axis and ``nt`` time steps."""

    m: float
    nx: int
    nt: int
    d: int = 1

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("box radius m must be positive")
        if self.nx < 3:
            raise ValueError("nx must be >= 3")
        if self.nt < 1:
            raise ValueError("nt must be >= 1")
        if self.d not in (1, 2):
            raise ValueError("the PDE solver supports d = 1 or 2")

    @property
    def hx(self) -> float:
        return 2.0 * self.m / (self.nx - 1)

    def ht(self, T: float) -> float:
        return T / self.nt

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.m, self.m, self.nx)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.d

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(nx, [nx,] d)``."""
        ax = self.axis
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for k in range(self.d):
            sl = [slice(None)] * self.d
            sl[k] = 0
            mask[tuple(sl)] = False
            sl[k] = -1
            mask[tuple(sl)] = False
        return mask

    def inner_mask(self, frac: float) -> np.ndarray:
        """Nodes with every coordinate in ``[-frac m, frac m]``."""
        x = self.nodes()
        return np.all(np.abs(x) <= frac * self.m * (1 + 1e-12), axis=-1)


def psi_eps(z, eps: float, smooth: bool = False):
    """Penalty ``max(z, 0) / eps``.

    With ``smooth=True`` a C^1 variant with a quadratic knee of width
    ``eps^2``: ``z^2 / (2 eps^3)`` on ``[0, eps^2]`` and ``(z - eps^2/2) / eps``
    beyond; it is convex, nondecreasing and below ``z^+ / eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    if smooth:
        w = eps * eps
        out = np.where(z <= 0, 0.0, np.where(z < w, z * z / (2 * w * eps), (z - 0.5 * w) / eps))
    else:
        out = np.maximum(z, 0.0) / eps
    return float(out) if out.ndim == 0 else out


def _psi_prime(z, eps, smooth):
    if smooth:
        w = eps * eps
        return np.where(z <= 0, 0.0, np.where(z < w, z / (w * eps), 1.0 / eps))
    return np.where(z > 0, 1.0 / eps, 0.0)


def gamma_norm(y, gamma: float, d0: int) -> np.ndarray:
    """``|y|_gamma = sqrt(|y_[d0]|^2 + gamma |y_[d1]|^2)`` along the last axis."""
    y = np.asarray(y, dtype=float)
    return np.sqrt(np.sum(y[..., :d0] ** 2, axis=-1) + gamma * np.sum(y[..., d0:] ** 2, axis=-1))


def hamiltonian(y, t: float, eps: float, gamma: float, payoffs: PayoffSpec, d0: int | None = None):
    """Closed form of ``sup_p { <y, p>_gamma - psi_eps(|p|_gamma^2 - f_gamma(t)^2) }``.

    With ``w = |y|_gamma`` and ``F = f_gamma(t)``: ``F w`` if ``w <= 2F/eps``,
    else ``eps w^2 / 4 + F^2 / eps``.

    Examples
    --------
    >>> from sgl.model import make_payoffs
    >>> p = make_payoffs(1.0, 0.0, 0.0, 0.0, 1.0)
    >>> float(hamiltonian([10.0], 0.0, 0.5, 1.0, p))
    14.5
    """
    y = np.asarray(y, dtype=float)
    d0 = y.shape[-1] if d0 is None else d0
    w = gamma_norm(y, gamma, d0)
    F = np.asarray(f_gamma(payoffs, gamma, t), dtype=float)
    out = np.where(w <= 2 * F / eps, F * w, eps * w * w / 4 + F * F / eps)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# operator assembly: a stencil is a dict offset -> row-aligned coefficient array

def _linear_stencil(model: SdeModel, grid: Grid, r: float) -> dict[int, np.ndarray]:
    d, nx, h = grid.d, grid.nx, grid.hx
    X = grid.nodes().reshape(-1, d)
    N = X.shape[0]
    b = np.asarray(model.drift(X), dtype=float).reshape(N, d)
    a = np.asarray(model.covariance(X), dtype=float).reshape(N, d, d)
    strides = [nx ** (d - 1 - k) for k in range(d)]
    st: dict[int, np.ndarray] = {0: np.full(N, -float(r))}

    def add(off, coef):
        st[off] = st.get(off, 0.0) + coef

    cross = np.zeros(N)
    if d == 2:
        cross = a[:, 0, 1]
        s0, s1 = strides
        pos = np.maximum(cross, 0.0) / (2 * h * h)
        neg = np.maximum(-cross, 0.0) / (2 * h * h)
        add(s0 + s1, pos)
        add(-s0 - s1, pos)
        add(s0 - s1, neg)
        add(-s0 + s1, neg)
        add(0, -2 * pos - 2 * neg)
    for k in range(d):
        s = strides[k]
        diff = 0.5 * a[:, k, k] / (h * h) - 0.5 * np.abs(cross) / (h * h)
        if np.any(diff < -1e-14 * (1 + np.abs(a[:, k, k]))):
            log.warning("diffusion not diagonally dominant; stencil not monotone")
        bk = b[:, k]
        central_ok = diff - np.abs(bk) / (2 * h) >= 0
        up = np.where(central_ok, diff + bk / (2 * h), diff + np.maximum(bk, 0.0) / h)
        dn = np.where(central_ok, diff - bk / (2 * h), diff + np.maximum(-bk, 0.0) / h)
        add(s, up)
        add(-s, dn)
        add(0, -up - dn)
    interior = grid.interior_mask().reshape(-1)
    return {off: np.where(interior, c, 0.0) for off, c in st.items()}


def _to_banded(st: dict[int, np.ndarray], N: int) -> np.ndarray:
    ab = np.zeros((3, N))
    for off, c in st.items():
        if off >= 0:
            ab[1 - off, off:] = c[: N - off]
        else:
            ab[1 - off, : N + off] = c[-off:]
    return ab


def _to_sparse(st: dict[int, np.ndarray], N: int) -> sp.csr_matrix:
    offs = sorted(st)
    diags = [st[o][: N - o] if o >= 0 else st[o][-o:] for o in offs]
    return sp.diags(diags, offs, shape=(N, N), format="csr")


class _SliceOps:
    """Upwind gradient penalty and its Jacobian on the flattened grid."""

    def __init__(self, grid: Grid, d0: int, gamma: float, eps: float, smooth: bool):
        self.grid = grid
        self.d = grid.d
        self.nx = grid.nx
        self.h = grid.hx
        self.weights = [1.0 if k < d0 else gamma for k in range(self.d)]
        self.eps = eps
        self.smooth = smooth
        self.strides = [self.nx ** (self.d - 1 - k) for k in range(self.d)]
        self.interior = grid.interior_mask().reshape(-1)

    def penalty(self, u: np.ndarray, F: float):
        """Return ``Psi(u)`` and the stencil of its derivative."""
        N = u.size
        U = u.reshape(self.grid.shape)
        P = np.zeros(self.grid.shape)
        parts = []
        for k in range(self.d):
            w = self.weights[k]
            dm = np.zeros(self.grid.shape)
            dp = np.zeros(self.grid.shape)
            sl_c = [slice(1, -1)] * self.d
            sl_m = list(sl_c)
            sl_p = list(sl_c)
            sl_m[k] = slice(0, -2)
            sl_p[k] = slice(2, None)
            c, mm, pp = U[tuple(sl_c)], U[tuple(sl_m)], U[tuple(sl_p)]
            dm[tuple(sl_c)] = (c - mm) / self.h
            dp[tuple(sl_c)] = (pp - c) / self.h
            use_m = dm >= -dp
            q = np.maximum(np.where(use_m, dm, -dp), 0.0)
            if w > 0:
                P += w * q * q
            parts.append((w, q.reshape(-1), use_m.reshape(-1)))
        z = P.reshape(-1) - F * F
        psi = np.where(self.interior, psi_eps(z, self.eps, self.smooth), 0.0)
        dpsi = np.where(self.interior, _psi_prime(z, self.eps, self.smooth), 0.0)
        st: dict[int, np.ndarray] = {0: np.zeros(N)}
        for k, (w, q, use_m) in enumerate(parts):
            if w == 0:
                continue
            coef = dpsi * 2 * w * q / self.h
            s = self.strides[k]
            st[0] = st[0] + coef
            st[-s] = st.get(-s, 0.0) - np.where(use_m, coef, 0.0)
            st[s] = st.get(s, 0.0) - np.where(use_m, 0.0, coef)
        return psi, st


@dataclass
class PdeSolution:
    """Grid solution of the penalised problem.

    ``values`` has shape ``(nt + 1, nx[, nx])``; slice ``n`` is time ``n ht``.
    The object is callable: ``sol(t, x)`` interpolates multilinearly in space
    and linearly in time (states outside the box are clamped to it).
    """

    values: np.ndarray
    grid: Grid
    T: float
    eps: float
    delta: float
    gamma: float
    model: SdeModel | None = None
    payoffs: PayoffSpec | None = None
    taper_k: float | None = None
    log: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.grid.nt + 1)

    @property
    def ht(self) -> float:
        return self.T / self.grid.nt

    def obstacle(self, n: int) -> np.ndarray:
        """Tapered obstacle ``g(t_n) xi_k`` on the grid (0 on the boundary)."""
        return _tapered_g(self.payoffs, self.grid, self.times[n], self.taper_k)

    def __call__(self, t, x) -> np.ndarray:
        return self._interp(self.values, t, x)

    def gap(self, t, x) -> np.ndarray:
        """Interpolated ``u - g xi_k``: distance of the value to the tapered obstacle."""
        if "_gap" not in self.__dict__:
            obst = np.stack([self.obstacle(n) for n in range(self.grid.nt + 1)])
            self.__dict__["_gap"] = self.values - obst
        return self._interp(self.__dict__["_gap"], t, x)

    def _interp(self, V: np.ndarray, t, x) -> np.ndarray:
        g = self.grid
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        tt = np.broadcast_to(np.asarray(t, dtype=float), shape).reshape(-1)
        xx = x.reshape(-1, g.d)
        s = (xx + g.m) / g.hx
        if np.any(s < -1e-9) or np.any(s > g.nx - 1 + 1e-9):
            log.warning("value lookup outside the box; clamping to the box edge")
        s = np.clip(s, 0.0, g.nx - 1)
        i0 = np.minimum(s.astype(np.int64), g.nx - 2)
        fr = s - i0
        tau = np.clip(tt / self.ht, 0.0, g.nt)
        n0 = np.minimum(tau.astype(np.int64), g.nt - 1)
        ft = tau - n0
        flat = V.reshape(-1)
        slab = g.nx ** g.d
        if g.d == 1:
            base = n0 * slab + i0[:, 0]
            offs = ((0, 1.0 - fr[:, 0]), (1, fr[:, 0]))
        else:
            f0, f1 = fr[:, 0], fr[:, 1]
            base = n0 * slab + i0[:, 0] * g.nx + i0[:, 1]
            offs = ((0, (1 - f0) * (1 - f1)), (g.nx, f0 * (1 - f1)), (1, (1 - f0) * f1),
                    (g.nx + 1, f0 * f1))
        out = np.zeros(xx.shape[0])
        for dn, wt in ((0, 1.0 - ft), (slab, ft)):
            acc = np.zeros(xx.shape[0])
            for off, w in offs:
                acc += np.take(flat, base + (dn + off)) * w
            out += wt * acc
        return out.reshape(shape)


def _xi_scalar(z):
    from .limits import xi
    return xi(z)


def _tapered_g(payoffs: PayoffSpec, grid: Grid, t: float, k: float | None) -> np.ndarray:
    X = grid.nodes()
    gv = np.asarray(payoffs.g(np.full(grid.shape, t), X), dtype=float) * np.ones(grid.shape)
    if k is not None:
        r = np.linalg.norm(X, axis=-1)
        gv = gv * _xi_scalar((r - k) / k)
    return np.where(grid.interior_mask(), gv, 0.0)


def _h_on_grid(payoffs: PayoffSpec, grid: Grid, t: float) -> np.ndarray:
    X = grid.nodes()
    hv = np.asarray(payoffs.h(np.full(grid.shape, t), X), dtype=float) * np.ones(grid.shape)
    return np.where(grid.interior_mask(), hv, 0.0)


def _solve_linear(st: dict[int, np.ndarray], rhs: np.ndarray, d: int, atol: float = 0.0) -> np.ndarray:
    N = rhs.size
    if d == 1:
        return solve_banded((1, 1), _to_banded(st, N), rhs, check_finite=False)
    if np.max(np.abs(rhs)) <= atol:
        return np.zeros(N)
    A = _to_sparse(st, N)
    M = sp.diags(1.0 / st[0])
    sol, info = bicgstab(A, rhs, rtol=1e-10, atol=atol, maxiter=1000, M=M)
    if info != 0 or not np.all(np.isfinite(sol)):
        sol = spsolve(A.tocsc(), rhs)
    return sol


def _combine(*stencils, scale=None) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    for st, c in zip(stencils, scale or [1.0] * len(stencils)):
        for off, v in st.items():
            out[off] = out.get(off, 0.0) + c * v
    return out


def _apply(st: dict[int, np.ndarray], u: np.ndarray) -> np.ndarray:
    N = u.size
    out = np.zeros(N)
    for off, c in st.items():
        if off >= 0:
            out[: N - off] += c[: N - off] * u[off:]
        else:
            out[-off:] += c[-off:] * u[: N + off]
    return out


def solve_penalised(model: SdeModel, payoffs: PayoffSpec, grid: Grid, eps: float, delta: float,
                    gamma: float, *, taper_k: float | None = None, taper: bool = True,
                    smooth_psi: bool = False, scheme: str = "newton", max_sweeps: int = 200,
                    slice_tol: float = 1e-9, initial: np.ndarray | None = None) -> PdeSolution:
    """Solve the penalised problem backward in time.

    Parameters
    ----------
    model, payoffs : SdeModel, PayoffSpec
    grid : Grid
        Box radius, resolution and dimension (must match ``model.d``).
    eps, delta : float
        Gradient and obstacle penalty parameters.
    gamma : float
        Weight of the uncontrolled coordinates, in ``[0, 1]``.
    taper_k : float, optional
        Cut-off level for ``g``; defaults to ``m / 2``.  ``taper=False``
        disables the cut-off.
    smooth_psi : bool
        Use the C^1 penalty variant.
    scheme : {"newton", "picard"}
        Linearised-implicit penalties (default) or explicit penalties with
        sub-stepping ``ht < delta``.
    max_sweeps, slice_tol : int, float
        Sweep limit per slice and update tolerance (relative to the payoff
        scale ``max(1, max g, T max h)``).
    initial : ndarray, optional
        Warm start of shape ``(nt + 1, *grid.shape)`` used as first sweep iterate.

    Raises
    ------
    SolverError
        If a slice does not converge within ``max_sweeps``.
    """
    if grid.d != model.d:
        raise ValueError("grid dimension must equal the model dimension")
    if not (eps > 0 and delta > 0):
        raise ValueError("eps and delta must be positive")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    if scheme not in ("newton", "picard"):
        raise ValueError("scheme must be 'newton' or 'picard'")
    T = payoffs.T
    nt, N = grid.nt, grid.nx ** grid.d
    k_taper = (grid.m / 2 if taper_k is None else taper_k) if taper else None
    times = np.linspace(0.0, T, nt + 1)
    L = _linear_stencil(model, grid, payoffs.r)
    ops = _SliceOps(grid, model.d0, gamma, eps, smooth_psi)
    interior = grid.interior_mask().reshape(-1)
    ident = {0: np.ones(N)}

    g_T = _tapered_g(payoffs, grid, T, k_taper).reshape(-1)
    gmax = float(np.max(np.abs(g_T)))
    hmax = float(np.max(np.abs(_h_on_grid(payoffs, grid, 0.0))))
    scale = max(1.0, gmax, T * hmax)
    tol_abs = slice_tol * scale

    values = np.empty((nt + 1, N))
    values[nt] = g_T
    iters = np.zeros(nt, dtype=np.int64)
    final_upd = np.zeros(nt)
    n_sub = 1
    if scheme == "picard":
        n_sub = max(1, int(np.ceil((T / nt) / (0.5 * delta))))

    for n in range(nt - 1, -1, -1):
        t_n = times[n]
        gn = _tapered_g(payoffs, grid, t_n, k_taper).reshape(-1)
        hn = _h_on_grid(payoffs, grid, t_n).reshape(-1)
        F = float(f_gamma(payoffs, gamma, t_n))
        u_next = values[n + 1]
        if scheme == "newton":
            ht = T / nt
            base = _combine(ident, L, scale=[1.0, -ht])
            u = (initial[n].reshape(-1).copy() if initial is not None else u_next.copy())
            u[~interior] = 0.0

            def residual(u):
                psi, dst = ops.penalty(u, F)
                act = (gn - u > 0) & interior
                Ru = _apply(base, u) - u_next - ht * (hn + np.where(act, (gn - u) / delta, 0.0) - psi)
                Ru[~interior] = u[~interior]
                return Ru, dst, act

            R, dst, act = residual(u)
            upd = np.inf
            for it in range(1, max_sweeps + 1):
                J = _combine(base, dst, {0: np.where(act, 1.0 / delta, 0.0)}, scale=[1.0, ht, ht])
                J[0] = np.where(interior, J[0], 1.0)
                for off in J:
                    if off != 0:
                        J[off] = np.where(interior, J[off], 0.0)
                du = -_solve_linear(J, R, grid.d, 1e-3 * tol_abs)
                rnorm = np.max(np.abs(R))
                lam = 1.0
                for _ in range(8):
                    u_try = u + lam * du
                    R_try, dst_try, act_try = residual(u_try)
                    if np.max(np.abs(R_try)) <= rnorm or lam < 0.01:
                        break
                    lam *= 0.5
                upd = float(np.max(np.abs(lam * du)))
                u, R, dst, act = u_try, R_try, dst_try, act_try
                if upd <= tol_abs:
                    break
            else:
                raise SolverError(f"slice {n} (t = {t_n:.6g}) did not converge in {max_sweeps} sweeps; "
                                  f"last update {upd:.3e}", float(np.max(np.abs(R))), n)
            iters[n] = it
            final_upd[n] = upd
            values[n] = u
        else:
            ht = (T / nt) / n_sub
            base = _combine(ident, L, scale=[1.0, -ht])
            base[0] = np.where(interior, base[0], 1.0)
            for off in base:
                if off != 0:
                    base[off] = np.where(interior, base[off], 0.0)
            u_prev = u_next.copy()
            total_it = 0
            upd = 0.0
            for _sub in range(n_sub):
                u = u_prev.copy()
                for it in range(1, max_sweeps + 1):
                    psi, _ = ops.penalty(u, F)
                    rhs = u_prev + ht * (hn + np.maximum(gn - u, 0.0) / delta - psi)
                    rhs[~interior] = 0.0
                    u_new = _solve_linear(base, rhs, grid.d, 1e-3 * tol_abs)
                    upd = float(np.max(np.abs(u_new - u)))
                    u = u_new
                    if not np.isfinite(upd):
                        break
                    if upd <= tol_abs:
                        break
                else:
                    raise SolverError(f"slice {n} (t = {t_n:.6g}) did not converge in {max_sweeps} "
                                      f"sweeps; last update {upd:.3e}", upd, n)
                if not np.isfinite(upd):
                    raise SolverError(f"slice {n} diverged (penalty too stiff for the grid)", np.inf, n)
                total_it += it
                u_prev = u
            iters[n] = total_it
            final_upd[n] = upd
            values[n] = u_prev
        if not np.all(np.isfinite(values[n])):
            raise SolverError(f"non-finite values at slice {n}", np.inf, n)

    sol_log = {"iterations": iters, "final_update": final_upd, "total_iterations": int(iters.sum()),
               "scheme": scheme, "substeps": n_sub, "scale": scale}
    return PdeSolution(values.reshape((nt + 1,) + grid.shape), grid, T, eps, delta, gamma, model,
                       payoffs, k_taper, sol_log)


# ---------------------------------------------------------------------------
# diagnostics

def central_gradient(U: np.ndarray, h: float) -> list[np.ndarray]:
    """Central differences (one-sided at the edges) along each spatial axis of ``U``."""
    d = U.ndim
    if d == 1:
        return [np.gradient(U, h)]
    return list(np.gradient(U, h))


def _central_L(sol: PdeSolution, U: np.ndarray) -> np.ndarray:
    grid, model = sol.grid, sol.model
    h = grid.hx
    X = grid.nodes().reshape(-1, grid.d)
    b = np.asarray(model.drift(X)).reshape(grid.shape + (grid.d,))
    a = np.asarray(model.covariance(X)).reshape(grid.shape + (grid.d, grid.d))
    grads = central_gradient(U, h)
    out = np.zeros_like(U)
    for k in range(grid.d):
        second = np.zeros_like(U)
        sl_c = [slice(1, -1) if j == k else slice(None) for j in range(grid.d)]
        sl_m = [slice(0, -2) if j == k else slice(None) for j in range(grid.d)]
        sl_p = [slice(2, None) if j == k else slice(None) for j in range(grid.d)]
        second[tuple(sl_c)] = (U[tuple(sl_p)] - 2 * U[tuple(sl_c)] + U[tuple(sl_m)]) / (h * h)
        out += 0.5 * a[..., k, k] * second + b[..., k] * grads[k]
    if grid.d == 2:
        cross = np.gradient(grads[0], h, axis=1)
        out += a[..., 0, 1] * cross
    return out


def vi_residual(sol: PdeSolution, payoffs: PayoffSpec | None = None, collar_frac: float = 0.2):
    """Residuals of both lines of the variational inequality.

    Uses central differences: ``E = u_t + L u - r u + h`` (forward difference in
    time), ``G = f_gamma - |grad u|_gamma`` and ``O = g - u`` with the tapered
    obstacle.  Returns ``(res_min_form, res_max_form, where)`` where the first
    two are max-abs of ``min(max(E, O), G)`` and ``max(min(E, G), O)`` over
    nodes at distance ``>= collar_frac m`` from the boundary (all slices but
    the terminal one), and ``where`` is a dict locating the worst node.
    """
    payoffs = payoffs if payoffs is not None else sol.payoffs
    grid = sol.grid
    d0 = sol.model.d0
    mask = grid.inner_mask(1.0 - collar_frac) & grid.interior_mask()
    X = grid.nodes()
    worst_a = worst_b = 0.0
    where = {"t": None, "x": None, "form": None}
    for n in range(grid.nt):
        t = sol.times[n]
        U = sol.values[n]
        E = (sol.values[n + 1] - U) / sol.ht + _central_L(sol, U) - payoffs.r * U \
            + np.asarray(payoffs.h(np.full(grid.shape, t), X), dtype=float) * np.ones(grid.shape)
        grads = np.stack(central_gradient(U, grid.hx), axis=-1)
        G = float(f_gamma(payoffs, sol.gamma, t)) - gamma_norm(grads, sol.gamma, d0)
        O = sol.obstacle(n) - U
        ra = np.abs(np.minimum(np.maximum(E, O), G))[mask]
        rb = np.abs(np.maximum(np.minimum(E, G), O))[mask]
        if ra.size and ra.max() > worst_a:
            worst_a = float(ra.max())
            if worst_a >= worst_b:
                where = {"t": float(t), "x": X[mask][int(np.argmax(ra))].tolist(), "form": "min"}
        if rb.size and rb.max() > worst_b:
            worst_b = float(rb.max())
            if worst_b >= worst_a:
                where = {"t": float(t), "x": X[mask][int(np.argmax(rb))].tolist(), "form": "max"}
    return worst_a, worst_b, where


@dataclass(frozen=True)
class RegionMap:
    """Boolean labels over ``(time, space)``; labels may overlap."""

    stop: np.ndarray
    saturated: np.ndarray
    times: np.ndarray
    grid: Grid

    @property
    def continuation(self) -> np.ndarray:
        return ~self.stop & ~self.saturated

    def labels(self) -> np.ndarray:
        """Integer codes: 0 continuation, 1 stop, 2 saturated, 3 stop and saturated."""
        return self.stop.astype(np.int8) + 2 * self.saturated.astype(np.int8)


def extract_regions(sol: PdeSolution, payoffs: PayoffSpec | None = None, tol: float = 1e-6) -> RegionMap:
    """Label nodes STOP (``u - g <= tol``) and SATURATED (``|grad u|_gamma >= f_gamma - tol``)."""
    payoffs = payoffs if payoffs is not None else sol.payoffs
    grid = sol.grid
    d0 = sol.model.d0 if sol.model is not None else grid.d
    stop = np.zeros(sol.values.shape, dtype=bool)
    sat = np.zeros(sol.values.shape, dtype=bool)
    for n, t in enumerate(sol.times):
        U = sol.values[n]
        stop[n] = U - sol.obstacle(n) <= tol
        grads = np.stack(central_gradient(U, grid.hx), axis=-1)
        sat[n] = gamma_norm(grads, sol.gamma, d0) >= float(f_gamma(payoffs, sol.gamma, t)) - tol
    return RegionMap(stop, sat, sol.times, grid)


# ---------------------------------------------------------------------------
# persistence

_HEADER = struct.Struct("<4sIIII5d")


def write_grid(sol: PdeSolution, path) -> None:
    """Write the binary solution file (little-endian).

    Layout: magic ``SGVI``, u32 version, u32 d, u32 nx, u32 nt, f64 m, eps,
    delta, gamma, T, then the ``(nt+1) * nx^d`` values as f64, time-major.
    """
    g = sol.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRID_MAGIC, GRID_VERSION, g.d, g.nx, g.nt, g.m, sol.eps, sol.delta,
                              sol.gamma, sol.T))
        fh.write(np.ascontiguousarray(sol.values, dtype="<f8").tobytes())


def read_grid(path) -> tuple[dict, np.ndarray]:
    """Read a file written by :func:`write_grid`; returns ``(header, values)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, nx, nt, m, eps, delta, gamma, T = _HEADER.unpack_from(raw, 0)
    if magic != GRID_MAGIC:
        raise ValueError("not an SGVI solution file")
    if version != GRID_VERSION:
        raise ValueError(f"unsupported SGVI version {version}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    vals = vals.reshape((nt + 1,) + (nx,) * d).copy()
    header = dict(version=version, d=d, nx=nx, nt=nt, m=m, eps=eps, delta=delta, gamma=gamma, T=T)
    return header, vals


def export_csv(sol: PdeSolution, fh, slices=(0,)) -> None:
    """Write ``t,x1[,x2],u,g,grad0,f`` rows for the requested time slices."""
    grid = sol.grid
    d0 = sol.model.d0 if sol.model is not None else grid.d
    cols = ["t"] + [f"x{k + 1}" for k in range(grid.d)] + ["u", "g", "grad0", "f"]
    fh.write(",".join(cols) + "\n")
    X = grid.nodes().reshape(-1, grid.d)
    for n in slices:
        t = float(sol.times[n])
        U = sol.values[n]
        grads = np.stack(central_gradient(U, grid.hx), axis=-1)
        g0 = np.sqrt(np.sum(grads[..., :d0] ** 2, axis=-1)).reshape(-1)
        gv = sol.obstacle(n).reshape(-1)
        fv = float(sol.payoffs.f(t))
        for i, u in enumerate(U.reshape(-1)):
            fh.write(",".join([repr(t)] + [repr(float(v)) for v in X[i]]
                              + [repr(float(u)), repr(float(gv[i])), repr(float(g0[i])), repr(fv)]) + "\n")
