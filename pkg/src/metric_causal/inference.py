"""Bootstrap pivotal intervals and randomization tests for ``T_alpha``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EmptyCellError, MatchingError, SeparationError, ValidationError
from .estimands import StratifiedDataset, estimate_t_alpha
from .frechet import SolverOptions

# relative slack when comparing permuted statistics with the observed one
TIE_TOLERANCE = 1e-9
MAX_REDRAWS = 10_000


@dataclass
class IntervalEstimate:
    alpha: int
    level: float
    lower: float
    upper: float
    B: int
    point: float
    redraws: int = 0
    solver_failures: int = 0
    replicates: np.ndarray = field(default=None, repr=False)

    def covers(self, value):
        return self.lower <= value <= self.upper


@dataclass
class TestResult:
    statistic: float
    p_value: float
    permutations: int
    exceedances: int
    method: str = "within-stratum-permutation"
    solver_failures: int = 0

    __test__ = False  # not a pytest class


def pivotal_interval(point, replicates, level):
    """``[2 theta - q_(1-delta/2), 2 theta - q_(delta/2)]`` truncated below at 0.

    Quantiles use linear interpolation between order statistics (numpy's
    default, Hyndman-Fan type 7).
    """
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    delta = 1.0 - level
    reps = np.sort(np.asarray(replicates, dtype=float))
    q_lo, q_hi = np.quantile(reps, [delta / 2.0, 1.0 - delta / 2.0])
    lower = max(0.0, 2.0 * point - q_hi)
    upper = max(0.0, 2.0 * point - q_lo)
    return lower, upper


_REDRAW_ERRORS = (EmptyCellError, MatchingError, SeparationError)


def bootstrap_pivotal_ci(data: StratifiedDataset, alpha: int, B: int = 500, level: float = 0.95,
                         rematch: Callable | None = None, rng=None, opts: SolverOptions | None = None,
                         backend=None) -> IntervalEstimate:
    """Pivotal bootstrap interval for the AATE (``alpha=2``) or AMTE (``alpha=1``).

    Parameters
    ----------
    data : StratifiedDataset
        Stratified data, or raw data when ``rematch`` is given.
    alpha : {1, 2}
    B : int
        Number of bootstrap resamples (at least 100).
    level : float
        Confidence level ``1 - delta``.
    rematch : callable, optional
        Maps a raw dataset to a stratified one (e.g. by matching). It is
        applied to the data and again to every resample.
    rng : numpy.random.Generator

    Returns
    -------
    IntervalEstimate
        ``redraws`` counts resamples discarded because a stratum lost all its
        treated or control units (or matching failed).

    Notes
    -----
    Each resample draws ``N`` units with replacement and recomputes
    ``T_alpha`` with stratum weights ``m_s / N`` of the resample. The point
    estimate uses the stratum weights of ``data`` as supplied.
    """
    if int(B) < 100:
        raise ValidationError("B must be at least 100")
    rng = rng if rng is not None else np.random.default_rng()
    base = rematch(data) if rematch is not None else data
    point_est = estimate_t_alpha(base, alpha, opts, backend)
    n = len(data)
    reps = np.empty(int(B))
    redraws = 0
    failures = 0 if point_est.converged else 1
    for b in range(int(B)):
        while True:
            idx = rng.integers(0, n, size=n)
            try:
                if rematch is not None:
                    sample = rematch(data.subset(idx, lambda_hat=np.array([1.0]) if data.xi == 1 else None))
                else:
                    sample = data.subset(idx)
                break
            except _REDRAW_ERRORS:
                redraws += 1
                if redraws > MAX_REDRAWS:
                    raise
        est = estimate_t_alpha(sample, alpha, opts, backend)
        failures += not est.converged
        reps[b] = est.value
    lower, upper = pivotal_interval(point_est.value, reps, level)
    return IntervalEstimate(alpha, level, lower, upper, int(B), point_est.value, redraws, failures, reps)


def permute_within_strata(z, s, rng):
    """Uniformly random reassignment of ``z`` keeping each stratum's treated count."""
    z = np.asarray(z)
    out = z.copy()
    for label in np.unique(s):
        members = np.flatnonzero(s == label)
        if len(members) > 1:
            out[members] = z[rng.permutation(members)]
    return out


def randomization_test(data: StratifiedDataset, alpha: int, n_perm: int = 1000, rng=None,
                       opts: SolverOptions | None = None, backend=None) -> TestResult:
    """Monte-Carlo randomization test of Fisher's sharp null of no effect.

    Outcomes and strata are held fixed while treatment is reassigned within
    strata. The p-value is ``(b + 1) / (n_perm + 1)`` where ``b`` counts
    permuted statistics at least as large as the observed one (within a
    relative ``TIE_TOLERANCE``).
    """
    if int(n_perm) < 1:
        raise ValidationError("n_perm must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    observed = estimate_t_alpha(data, alpha, opts, backend)
    threshold = observed.value * (1.0 - TIE_TOLERANCE) - 1e-15
    failures = 0 if observed.converged else 1
    b = 0
    for _ in range(int(n_perm)):
        permuted = data.with_assignment(permute_within_strata(data.z, data.s, rng))
        est = estimate_t_alpha(permuted, alpha, opts, backend)
        failures += not est.converged
        b += est.value >= threshold
    return TestResult(observed.value, (b + 1) / (int(n_perm) + 1), int(n_perm), int(b), solver_failures=failures)
