"""Independent reference computations shared by the test modules."""
import numpy as np
from scipy.optimize import minimize

from metric_causal.geometry import Euclidean, Hyperbolic2, KendallShape, Sphere2

FD_STEP = 1e-5


def origin(m):
    if isinstance(m, Hyperbolic2):
        return np.array([1.0, 0.0, 0.0])
    if isinstance(m, KendallShape):
        return m.random_point(np.random.default_rng(0))
    return np.zeros(m.ambient_shape) if isinstance(m, Euclidean) else np.array([0.0, 0.0, 1.0])


def bounded_tangent(m, p, rng, max_norm):
    """Random tangent at each row of ``p`` with norm uniform in [0, max_norm)."""
    p = np.atleast_2d(p)
    v = m.random_tangent(p, rng)
    return v * (max_norm * rng.uniform(size=len(p)) / m.norm(p, v))[:, None]


def cloud(m, rng, n, spread=0.6, centre=None):
    """``n`` points scattered around ``centre`` (random by default) within ``spread``."""
    if centre is None:
        o = origin(m)
        centre = m.exp(o, bounded_tangent(m, o, rng, 1.0)[0])
    base = np.broadcast_to(centre, (n, *np.shape(centre))).copy()
    return m.exp(base, bounded_tangent(m, base, rng, spread))


def sphere_angles_to_point(theta, phi):
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


def sphere_objective_plain(q, points, weights, alpha):
    """``sum w d^alpha`` with the textbook arccos distance."""
    d = np.arccos(np.clip(points @ q, -1.0, 1.0))
    return float(np.sum(weights * d**alpha))


def sphere_center_oracle(points, weights, alpha, step=0.002):
    """Grid search over the sphere, then a Nelder-Mead polish in spherical angles.

    The grid runs at ``50 * step`` resolution everywhere and is refined to
    ``step`` in a window around the best coarse cell.
    """
    coarse = 50 * step
    th = np.arange(0.0, np.pi + coarse, coarse)
    ph = np.arange(0.0, 2 * np.pi, coarse)
    T, P = np.meshgrid(th, ph, indexing="ij")
    grid = sphere_angles_to_point(T.ravel(), P.ravel())
    d = np.arccos(np.clip(grid @ points.T, -1.0, 1.0))
    vals = (d**alpha) @ weights
    k = np.argmin(vals)
    t0, p0 = T.ravel()[k], P.ravel()[k]
    th = np.arange(t0 - coarse, t0 + coarse, step)
    ph = np.arange(p0 - coarse, p0 + coarse, step)
    T, P = np.meshgrid(th, ph, indexing="ij")
    grid = sphere_angles_to_point(T.ravel(), P.ravel())
    d = np.arccos(np.clip(grid @ points.T, -1.0, 1.0))
    k = np.argmin((d**alpha) @ weights)
    x0 = np.array([T.ravel()[k], P.ravel()[k]])
    res = minimize(lambda a: sphere_objective_plain(sphere_angles_to_point(*a), points, weights, alpha), x0,
                   method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return sphere_angles_to_point(*res.x)


def directional_fd(f, m, p, h, step=FD_STEP):
    """Central difference of ``f`` along the geodesic through ``p`` with velocity ``h``."""
    return (f(m.exp(p, step * h)) - f(m.exp(p, -step * h))) / (2 * step)


def weighted_median_1d(x, w):
    """Smallest ``x`` at which the cumulative weight reaches one half."""
    order = np.argsort(x)
    cw = np.cumsum(w[order])
    return x[order][np.searchsorted(cw, 0.5 * cw[-1])]
