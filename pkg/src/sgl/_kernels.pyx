# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: keyed normals, affine Euler stepping, scalar occupation sums.

Every routine here has a numpy twin in :mod:`sgl._fallback` with identical
semantics; :mod:`sgl.kernels` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, exp, fabs, isfinite
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t PATH_MULT = 0xD1B54A32D192ED03ULL
cdef uint64_t PATH_INC = 0x8CB92BA72F3D8DD7ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.1102230246251565e-16


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _path_key(uint64_t seed, uint64_t path) noexcept nogil:
    return _mix64(_mix64(seed + GOLDEN) ^ (path * PATH_MULT + PATH_INC))


cdef inline double _uniform(uint64_t key, uint64_t ctr) noexcept nogil:
    return (<double>(_mix64(key + (ctr + 1) * GOLDEN) >> 11) + 0.5) * INV_2_53


cdef inline void _fill_normals(uint64_t key, uint64_t q0, Py_ssize_t n, double* out) noexcept nogil:
    # draw q uses pair q >> 1: cos branch for even q, sin branch for odd q
    cdef Py_ssize_t i = 0
    cdef uint64_t q = q0, pair
    cdef double rad, ang
    while i < n:
        pair = q >> 1
        rad = sqrt(-2.0 * log(_uniform(key, 2 * pair)))
        ang = TWO_PI * _uniform(key, 2 * pair + 1)
        if q & 1:
            out[i] = rad * sin(ang)
            i += 1
            q += 1
        else:
            out[i] = rad * cos(ang)
            i += 1
            q += 1
            if i < n:
                out[i] = rad * sin(ang)
                i += 1
                q += 1


def normal_block(uint64_t seed, int64_t path_start, Py_ssize_t n_paths,
                 int64_t q_start, Py_ssize_t n_q):
    """Standard normals for draws ``q_start .. q_start+n_q-1`` of each path."""
    out = np.empty((n_paths, n_q), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t p
    cdef uint64_t key
    if n_q == 0:
        return out
    with nogil:
        for p in range(n_paths):
            key = _path_key(seed, <uint64_t>(path_start + p))
            _fill_normals(key, <uint64_t>q_start, n_q, &o[p, 0])
    return out


def euler_affine(double[::1] x0, double[::1] alpha, double[::1] beta,
                 double[::1] vol_c, double[::1] vol_s,
                 double[:, ::1] cont_inc, double[:, ::1] atom_inc,
                 double dt, uint64_t seed, int64_t path_start,
                 Py_ssize_t n_paths, Py_ssize_t dprime):
    """Euler-Maruyama for b_i = alpha_i + beta_i x_i, kappa_ii = c_i + s_i x_i.

    Returns ``(pre, post, bad_step)`` with arrays of shape
    ``(n_paths, n_steps + 1, d)``; ``bad_step`` is -1 unless a state became
    non-finite.
    """
    cdef Py_ssize_t d = x0.shape[0]
    cdef Py_ssize_t n_steps = cont_inc.shape[0]
    pre_arr = np.empty((n_paths, n_steps + 1, d), dtype=np.float64)
    post_arr = np.empty((n_paths, n_steps + 1, d), dtype=np.float64)
    cdef double[:, :, ::1] pre = pre_arr
    cdef double[:, :, ::1] post = post_arr
    cdef double sq = sqrt(dt)
    cdef Py_ssize_t p, k, i
    cdef uint64_t key
    cdef double xv
    cdef int64_t bad = -1
    z_arr = np.empty(dprime, dtype=np.float64)
    cdef double[::1] z = z_arr
    with nogil:
        for p in range(n_paths):
            key = _path_key(seed, <uint64_t>(path_start + p))
            for i in range(d):
                pre[p, 0, i] = x0[i]
                post[p, 0, i] = x0[i] + atom_inc[0, i]
            for k in range(n_steps):
                _fill_normals(key, <uint64_t>(k * dprime), dprime, &z[0])
                for i in range(d):
                    xv = post[p, k, i]
                    xv = xv + (alpha[i] + beta[i] * xv) * dt \
                        + (vol_c[i] + vol_s[i] * xv) * (sq * z[i]) + cont_inc[k, i]
                    pre[p, k + 1, i] = xv
                    post[p, k + 1, i] = xv + atom_inc[k + 1, i]
                    if not isfinite(xv) and (bad < 0 or k + 1 < bad):
                        bad = k + 1
    return pre_arr, post_arr, bad


def scalar_occupation(double x0, double drift, double sigma, double[::1] jump_inc, double dt,
                      uint64_t seed, int64_t path_start, Py_ssize_t n_paths,
                      double bandwidth, double[::1] eps):
    """Local-time and bound sums for ``J = x0 + drift t + sigma W + jumps``.

    Returns ``(L, S)``: ``L[p]`` is the occupation estimate of the local time
    at 0 with the given bandwidth and ``S[p, e]`` the right-hand side of the
    local-time bound for ``eps[e]`` without the jump term.
    """
    cdef Py_ssize_t n_steps = jump_inc.shape[0] - 1
    cdef Py_ssize_t n_eps = eps.shape[0]
    L_arr = np.zeros(n_paths, dtype=np.float64)
    S_arr = np.zeros((n_paths, n_eps), dtype=np.float64)
    cdef double[::1] L = L_arr
    cdef double[:, ::1] S = S_arr
    z_arr = np.empty(n_steps, dtype=np.float64)
    cdef double[::1] z = z_arr
    cdef double sq = sqrt(dt), dq = sigma * sigma * dt
    cdef double j, dj, e, occ, tail
    cdef Py_ssize_t p, k, m
    cdef uint64_t key
    with nogil:
        for p in range(n_paths):
            key = _path_key(seed, <uint64_t>(path_start + p))
            if sigma != 0.0 and n_steps > 0:
                _fill_normals(key, 0, n_steps, &z[0])
            j = x0 + jump_inc[0]
            occ = 0.0
            for m in range(n_eps):
                S[p, m] = 4.0 * eps[m]
            for k in range(n_steps):
                if sigma != 0.0:
                    dj = drift * dt + sigma * (sq * z[k])
                else:
                    dj = drift * dt
                if fabs(j) < bandwidth:
                    occ = occ + dq
                for m in range(n_eps):
                    e = eps[m]
                    if j >= e:
                        tail = exp(1.0 - j / e)
                        S[p, m] = S[p, m] - 2.0 * tail * dj
                        if j > e:
                            S[p, m] = S[p, m] + tail * dq / e
                    elif j >= 0.0:
                        S[p, m] = S[p, m] - 2.0 * dj
                j = j + dj + jump_inc[k + 1]
            L[p] = occ / (2.0 * bandwidth)
    return L_arr, S_arr
