"""Select the compiled solver kernel when available, else the numpy fallback.

Set ``METRIC_CAUSAL_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("METRIC_CAUSAL_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _ext
except ImportError:
    _ext = None

BACKEND = "cython" if _ext is not None else "python"

# beyond MAX_FULL_SCAN points the starting point is chosen among an evenly spaced
# subset sized to keep about SCAN_BUDGET distance evaluations
MAX_FULL_SCAN = 2048
SCAN_BUDGET = 4_000_000
CHUNK = 16


def _use_ext(manifold, backend):
    if backend == "python":
        return False
    if backend == "cython" and _ext is None:
        raise RuntimeError("compiled kernels are not built")
    return _ext is not None and manifold.kernel_code is not None


def best_data_point(manifold, points, weights, alpha, backend=None):
    """Index of the (candidate) sample point with the smallest weighted objective."""
    n = len(points)
    if n > MAX_FULL_SCAN:
        idx = np.unique(np.linspace(0, n - 1, max(16, SCAN_BUDGET // n)).astype(int))
        vals = []
        for start in range(0, len(idx), CHUNK):
            d = manifold.dist(points[idx[start:start + CHUNK], None], points[None])
            vals.append((d * d if alpha == 2 else d) @ weights)
        return int(idx[int(np.argmin(np.concatenate(vals)))])
    if _use_ext(manifold, backend):
        return _ext.best_data_point(manifold.kernel_code, points, weights, alpha)
    return _kernels_py.best_data_point(manifold, points, weights, alpha)


def solve_l_alpha(manifold, points, weights, alpha, init, max_iterations, step_size, tol, eps,
                  backend=None):
    if _use_ext(manifold, backend):
        try:
            return _ext.solve_l_alpha(manifold.kernel_code, points, weights, alpha, init,
                                      max_iterations, step_size, tol, eps)
        except ValueError as exc:
            from .errors import CutLocusError

            raise CutLocusError(str(exc)) from None
    return _kernels_py.solve_l_alpha(manifold, points, weights, alpha, init, max_iterations,
                                     step_size, tol, eps)
