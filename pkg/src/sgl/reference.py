"""Closed-form and lattice reference values used as test oracles."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["crr_put", "feynman_kac_constant", "expected_brownian_local_time", "bs_put"]


def crr_put(S0: float, K: float, r: float, sigma: float, T: float, steps: int = 2000,
            american: bool = True) -> float:
    """Put price on a Cox-Ross-Rubinstein binomial tree.

    Parameters
    ----------
    S0, K : float
        Spot and strike.
    r, sigma : float
        Continuously compounded rate and volatility.
    T : float
        Maturity.
    steps : int
        Number of tree steps.
    american : bool
        Allow early exercise.

    Examples
    --------
    >>> round(crr_put(100, 100, 0.05, 0.2, 0.25, 2000, american=False), 2)
    3.37
    """
    dt = T / steps
    u = math.exp(sigma * math.sqrt(dt))
    dn = 1.0 / u
    q = (math.exp(r * dt) - dn) / (u - dn)
    disc = math.exp(-r * dt)
    j = np.arange(steps + 1)
    S = S0 * u ** (steps - 2 * j)
    V = np.maximum(K - S, 0.0)
    for n in range(steps - 1, -1, -1):
        V = disc * (q * V[:-1] + (1 - q) * V[1:])
        if american:
            S = S0 * u ** (n - 2 * np.arange(n + 1))
            V = np.maximum(V, K - S)
    return float(V[0])


def bs_put(S0: float, K: float, r: float, sigma: float, T: float) -> float:
    """Black-Scholes European put."""
    sd = sigma * math.sqrt(T)
    d1 = (math.log(S0 / K) + (r + 0.5 * sigma ** 2) * T) / sd
    d2 = d1 - sd
    N = lambda z: 0.5 * math.erfc(-z / math.sqrt(2))  # noqa: E731
    return K * math.exp(-r * T) * N(-d2) - S0 * N(-d1)


def feynman_kac_constant(c: float, r: float, T: float) -> float:
    """Value ``int_0^T c e^{-rs} ds`` of a constant running payoff."""
    return c * T if r == 0 else c * (1.0 - math.exp(-r * T)) / r


def expected_brownian_local_time(T: float = 1.0) -> float:
    """``E[L^0_T] = E|W_T| = sqrt(2 T / pi)`` for standard Brownian motion from 0."""
    return math.sqrt(2.0 * T / math.pi)
