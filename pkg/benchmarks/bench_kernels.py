"""Time the compiled and pure-Python weighted L_alpha solvers on the same problems.

Usage::

    python3 benchmarks/bench_kernels.py [--n 200] [--repeats 20]
"""
import argparse
import time

import numpy as np

from metric_causal import _backend
from metric_causal.frechet import DEFAULT_OPTIONS, solve
from metric_causal.geometry import Euclidean, Hyperbolic2, Sphere2


def problems(n, rng):
    for manifold in (Euclidean(3), Sphere2(), Hyperbolic2()):
        centre = manifold.random_point(rng)
        v = manifold.random_tangent(np.broadcast_to(centre, (n, *centre.shape)).copy(), rng)
        v *= 0.5 / np.maximum(manifold.norm(centre, v), 1e-12)[:, None] * rng.uniform(size=(n, 1))
        points = manifold.exp(centre, v)
        weights = rng.uniform(size=n)
        yield manifold, points, weights / weights.sum()


def time_backend(cases, alpha, backend, repeats):
    start = time.perf_counter()
    results = []
    for _ in range(repeats):
        results = [solve(m, y, w, alpha, DEFAULT_OPTIONS, backend=backend) for m, y, w in cases]
    return (time.perf_counter() - start) / repeats, results


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args(argv)
    if _backend.BACKEND != "cython":
        print("compiled kernels are not built; only the Python backend is available")
        return
    cases = list(problems(args.n, np.random.default_rng(0)))
    print(f"{'alpha':>5} {'python (ms)':>12} {'cython (ms)':>12} {'speed-up':>9} {'max |diff|':>11}")
    for alpha in (2, 1):
        t_py, r_py = time_backend(cases, alpha, "python", args.repeats)
        t_cy, r_cy = time_backend(cases, alpha, "cython", args.repeats)
        diff = max(np.max(np.abs(a.minimizer - b.minimizer)) for a, b in zip(r_py, r_cy))
        print(f"{alpha:>5} {1e3 * t_py:12.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:9.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
