"""Compare the compiled kernels with their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--paths N] [--steps M] [--repeat R]

For each kernel the best-of-``R`` wall time of both implementations, the
speed-up and the largest absolute difference of the outputs are printed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sgl import _fallback

try:
    from sgl import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b) if isinstance(x, np.ndarray))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def cases(n_paths: int, n_steps: int) -> dict:
    rng = np.random.default_rng(0)
    d = 2
    cont = rng.normal(0, 1e-3, (n_steps, d))
    atom = np.zeros((n_steps + 1, d))
    atom[n_steps // 3] = [0.3, -0.2]
    euler = (np.zeros(d), np.array([0.0, 0.1]), np.array([-0.1, -0.1]), np.array([0.4, 0.4]),
             np.zeros(d), cont, atom, 1.0 / n_steps, 11, 0, n_paths, d)
    jumps = np.zeros(n_steps + 1)
    jumps[n_steps // 3], jumps[2 * n_steps // 3] = 0.3, -0.3
    occ = (0.0, 0.0, 1.0, jumps, 1.0 / n_steps, 7, 0, n_paths, 0.01, np.array([0.1, 0.05, 0.02]))
    return {
        "normal_block": (11, 0, n_paths, 0, n_steps * d),
        "euler_affine": euler,
        "scalar_occupation": occ,
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    print(f"paths = {args.paths}, steps = {args.steps}, best of {args.repeat}")
    print(f"{'kernel':<20}{'compiled [s]':>14}{'python [s]':>14}{'speed-up':>10}{'max |diff|':>14}")
    for name, kargs in cases(args.paths, args.steps).items():
        tc, oc = best_of(lambda: getattr(_kernels, name)(*kargs), args.repeat)
        tp, op = best_of(lambda: getattr(_fallback, name)(*kargs), args.repeat)
        print(f"{name:<20}{tc:>14.4f}{tp:>14.4f}{tp / tc:>9.1f}x{max_diff(oc, op):>14.2e}")


if __name__ == "__main__":
    main()
