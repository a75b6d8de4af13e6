"""Weighted Fréchet means (alpha=2) and geometric medians (alpha=1).

The minimiser of ``sum_i w_i d(p, y_i)^alpha`` is found by Riemannian
descent; the heavy loop lives in :mod:`metric_causal._backend`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError, EmptyCellError, ValidationError
from .geometry import Manifold, ManifoldPoint

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 1000
    step_size: float = 1.0
    gradient_tolerance: float = 1e-9
    median_smoothing: float = 1e-9

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ValidationError("max_iterations must be a positive integer")
        if not self.step_size > 0 or not self.gradient_tolerance > 0:
            raise ValidationError("step_size and gradient_tolerance must be positive")
        if not self.median_smoothing >= 0:
            raise ValidationError("median_smoothing must be nonnegative")


DEFAULT_OPTIONS = SolverOptions()


@dataclass
class SolverResult:
    minimizer: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    final_gradient_norm: float
    objective_trace: np.ndarray = field(repr=False, default=None)
    nonunique: bool = False


@dataclass
class WeightedSample:
    """Points on one manifold with nonnegative weights summing to one."""

    manifold: Manifold
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = self.manifold.validate_point(np.asarray(self.points))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != len(self.manifold.ambient_shape) + 1:
            raise ValidationError("points must be an array of shape (n, *ambient_shape)")
        if len(self.points) == 0:
            raise ValidationError("empty sample")
        if self.weights.shape != (len(self.points),):
            raise ValidationError("weights and points differ in length")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValidationError("weights must be finite and nonnegative")
        if abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {self.weights.sum()!r}, not 1")


def _coords(sample, p):
    if isinstance(p, ManifoldPoint):
        if p.manifold != sample.manifold:
            raise DomainError(f"point on {p.manifold} but sample on {sample.manifold}")
        return p.coords
    p = np.asarray(p)
    if p.shape != sample.manifold.ambient_shape:
        raise DomainError(f"point of shape {p.shape} does not belong to {sample.manifold}")
    return sample.manifold.validate_point(p)


def _check_alpha(alpha):
    if alpha not in (1, 2):
        raise ValidationError(f"alpha must be 1 or 2, got {alpha!r}")


def weighted_objective(sample: WeightedSample, p, alpha: int) -> float:
    """``sum_i w_i d(p, y_i)^alpha``."""
    _check_alpha(alpha)
    p = _coords(sample, p)
    d = sample.manifold.dist(p, sample.points)
    return float(np.sum(sample.weights * d**alpha))


def weighted_gradient(sample: WeightedSample, p, alpha: int, smoothing: float = 0.0):
    """Riemannian gradient of :func:`weighted_objective` at ``p``.

    For ``alpha=1`` the distances in the denominator are smoothed as
    ``sqrt(d^2 + smoothing^2)``; points coinciding with ``p`` contribute
    nothing.
    """
    _check_alpha(alpha)
    p = _coords(sample, p)
    m = sample.manifold
    L = m.log(p, sample.points)
    if alpha == 2:
        return -2.0 * np.tensordot(sample.weights, L, axes=1)
    d = m.dist(p, sample.points)
    keep = d > 0
    coef = np.zeros_like(d)
    coef[keep] = sample.weights[keep] / np.sqrt(d[keep] ** 2 + smoothing**2)
    return -np.tensordot(coef, L, axes=1)


def solve(manifold, points, weights, alpha, opts=DEFAULT_OPTIONS, init=None, backend=None):
    """Unvalidated solver entry point used by the estimators.

    Zero-weight points are dropped before solving; they do not affect the
    objective.
    """
    keep = weights > 0
    if not np.any(keep):
        raise ValidationError("all weights are zero")
    Y = np.ascontiguousarray(points[keep])
    w = np.ascontiguousarray(weights[keep], dtype=float)
    if init is None:
        init = Y[_backend.best_data_point(manifold, Y, w, alpha, backend=backend)]
    p, f, it, conv, g, trace = _backend.solve_l_alpha(
        manifold, Y, w, alpha, np.ascontiguousarray(init, dtype=Y.dtype),
        int(opts.max_iterations), float(opts.step_size), float(opts.gradient_tolerance),
        float(opts.median_smoothing), backend=backend,
    )
    return SolverResult(p, float(f), int(it), bool(conv), float(g), trace)


def weighted_l_alpha_estimator(sample: WeightedSample, alpha: int, opts: SolverOptions | None = None,
                               init=None, *, check_uniqueness=False, rng=None, backend=None) -> SolverResult:
    """Weighted sample Fréchet mean (``alpha=2``) or geometric median (``alpha=1``).

    Parameters
    ----------
    sample : WeightedSample
    alpha : {1, 2}
    opts : SolverOptions, optional
    init : array_like or ManifoldPoint, optional
        Starting point. Defaults to the sample point with the smallest
        objective value.
    check_uniqueness : bool
        Re-solve from five random sample points and warn when equally good
        minimisers are more than ``1e-4`` apart.
    rng : numpy.random.Generator, optional
        Used only by ``check_uniqueness``.

    Returns
    -------
    SolverResult
        ``converged`` is False when the gradient tolerance was not reached
        within ``max_iterations``.
    """
    _check_alpha(alpha)
    opts = opts or DEFAULT_OPTIONS
    if init is not None:
        init = _coords(sample, init)
    res = solve(sample.manifold, sample.points, sample.weights, alpha, opts, init, backend)
    if check_uniqueness:
        res.nonunique = _multistart_disagrees(sample, alpha, opts, res, rng, backend)
        if res.nonunique:
            warnings.warn("weighted L_alpha estimator set appears to have several elements", RuntimeWarning,
                          stacklevel=2)
    return res


def _multistart_disagrees(sample, alpha, opts, res, rng, backend, n_starts=5):
    rng = rng if rng is not None else np.random.default_rng(0)
    m = sample.manifold
    support = np.flatnonzero(sample.weights > 0)
    for j in rng.choice(support, size=min(n_starts, len(support)), replace=False):
        other = solve(m, sample.points, sample.weights, alpha, opts, sample.points[j], backend)
        same_value = abs(other.objective_value - res.objective_value) <= 1e-8
        if same_value and m.dist(other.minimizer, res.minimizer) > 1e-4:
            return True
    return False


def stratification_weights(z, s, lambda_hat, group):
    """Per-unit weights giving each stratum's ``group`` total mass ``lambda_hat[s-1]``.

    Parameters
    ----------
    z : array_like of {0, 1}
    s : array_like of int
        Stratum labels ``1..Xi``.
    lambda_hat : array_like, shape (Xi,)
    group : {"treated", "control"}

    Returns
    -------
    ndarray
        Zero for units outside ``group``; ``lambda_s / m_s`` inside, where
        ``m_s`` counts the group's units in stratum ``s``.

    Raises
    ------
    EmptyCellError
        If some stratum contains no unit of ``group``.
    """
    z = np.asarray(z)
    s = np.asarray(s)
    lam = np.asarray(lambda_hat, dtype=float)
    if group not in ("treated", "control"):
        raise ValidationError("group must be 'treated' or 'control'")
    member = z == 1 if group == "treated" else z == 0
    counts = np.bincount(s[member], minlength=len(lam) + 1)[1:]
    if len(counts) > len(lam) or s.min(initial=1) < 1:
        raise ValidationError("stratum labels must lie in 1..len(lambda_hat)")
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise EmptyCellError(int(empty[0]) + 1, group)
    w = np.zeros(len(z))
    w[member] = lam[s[member] - 1] / counts[s[member] - 1]
    return w
