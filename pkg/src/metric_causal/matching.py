"""Propensity scores, rank-based Mahalanobis distances and greedy full matching.

Matched sets serve as strata for the stratified estimators, so every set
holds at least one treated and one control unit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .errors import MatchingError, SeparationError, ValidationError
from .estimands import StratifiedDataset, empirical_lambda

DEFAULT_CALIPER = 0.2
RIDGE = 1e-8


@dataclass
class PropensityModel:
    coefficients: np.ndarray
    fitted_scores: np.ndarray
    iterations: int = 0

    def predict(self, covariates):
        X = np.column_stack([np.ones(len(covariates)), covariates])
        return _expit(X @ self.coefficients)

    @property
    def logit_scores(self):
        return np.log(self.fitted_scores) - np.log1p(-self.fitted_scores)


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _separating_direction(X, z):
    """A direction ``a`` with ``(2z-1) X a >= 0`` for all units and not all zero, or None."""
    sign = 2.0 * z - 1.0
    A = sign[:, None] * X
    k = X.shape[1]
    res = linprog(-A.sum(axis=0), A_ub=-A, b_ub=np.zeros(len(z)), bounds=[(-1, 1)] * k, method="highs")
    if res.status == 0 and -res.fun > 1e-7 * max(1.0, np.abs(A).max()):
        return res.x
    return None


def estimate_propensity(covariates, z, max_iterations: int = 100, tol: float = 1e-8) -> PropensityModel:
    """Maximum-likelihood logistic regression of ``z`` on ``covariates`` by IRLS.

    Parameters
    ----------
    covariates : array_like, shape (N, k)
    z : array_like of {0, 1}, shape (N,)
    max_iterations : int
    tol : float
        Stop when the largest coefficient change falls below ``tol``.

    Returns
    -------
    PropensityModel
        Coefficients are ``(intercept, slope_1, ..., slope_k)``.

    Raises
    ------
    SeparationError
        If a linear combination of the covariates separates treated from
        control units, so that the maximum-likelihood estimate does not exist.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    z = np.asarray(z).astype(float)
    n, k = x.shape
    if len(z) != n:
        raise ValidationError("covariates and z differ in length")
    if n <= k + 1:
        raise ValidationError(f"need more than {k + 1} units for {k} covariates")
    if z.min() == z.max():
        raise ValidationError("both treatment groups must be present")
    X = np.column_stack([np.ones(n), x])
    direction = _separating_direction(X, z)
    if direction is not None:
        raise SeparationError(direction)
    beta = np.zeros(k + 1)
    beta[0] = np.log(z.mean() / (1.0 - z.mean()))
    for it in range(1, max_iterations + 1):
        mu = _expit(X @ beta)
        W = mu * (1.0 - mu)
        step = np.linalg.lstsq(X.T @ (W[:, None] * X), X.T @ (z - mu), rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    scores = np.clip(_expit(X @ beta), np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return PropensityModel(beta, scores, it)


def rank_mahalanobis(covariates) -> np.ndarray:
    """Mahalanobis distances between covariate ranks.

    Each column is replaced by its ranks (ties get the average rank) and the
    distance uses the covariance matrix of those ranks. A ridge of ``1e-8``
    is added to the diagonal when that matrix is singular.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        raise ValidationError("need at least two units")
    ranks = np.column_stack([rankdata(col, method="average") for col in x.T])
    cov = np.atleast_2d(np.cov(ranks, rowvar=False))
    if np.linalg.matrix_rank(cov) < cov.shape[0]:
        cov = cov + RIDGE * np.eye(cov.shape[0])
    chol = np.linalg.cholesky(cov)
    white = np.linalg.solve(chol, ranks.T).T
    D = cdist(white, white)
    np.fill_diagonal(D, 0.0)
    return D


def standardized_differences(covariates, z, strata=None, lambda_hat=None, scale=None):
    """``(mean_T - mean_C) / pooled sd`` per covariate.

    With ``strata`` the group means are stratum means averaged with weights
    ``lambda_hat`` (default: stratum shares). ``scale`` overrides the pooled
    standard deviation, so that before/after comparisons share a denominator.
    """
    x = np.asarray(covariates, dtype=float).reshape(len(z), -1)
    z = np.asarray(z)
    if scale is None:
        scale = np.sqrt(0.5 * (x[z == 1].var(axis=0, ddof=1) + x[z == 0].var(axis=0, ddof=1)))
    if strata is None:
        diff = x[z == 1].mean(axis=0) - x[z == 0].mean(axis=0)
    else:
        strata = np.asarray(strata)
        labels = np.unique(strata)
        lam = empirical_lambda(strata)[labels - 1] if lambda_hat is None else np.asarray(lambda_hat)
        diff = np.zeros(x.shape[1])
        for w, label in zip(lam, labels):
            inside = strata == label
            diff += w * (x[inside & (z == 1)].mean(axis=0) - x[inside & (z == 0)].mean(axis=0))
    return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)


@dataclass
class MatchResult:
    """Matched sets.

    ``stratum_of[i]`` is the set label (``1..n_sets``) of unit ``i`` or 0 if
    the unit is unmatched; ``unmatched`` maps those units to a reason.
    """

    stratum_of: np.ndarray
    n_sets: int
    unmatched: dict = field(default_factory=dict)
    balance_report: dict = field(default_factory=dict)
    caliper_width: float = np.inf

    @property
    def matched(self):
        return self.stratum_of > 0


def full_match_caliper(dist, scores, z, caliper: float = DEFAULT_CALIPER, covariates=None) -> MatchResult:
    """Greedy full matching with a propensity-score caliper.

    Parameters
    ----------
    dist : ndarray, shape (N, N)
        Unit-to-unit distances, e.g. from :func:`rank_mahalanobis`.
    scores : array_like, shape (N,)
        Propensity scores in (0, 1).
    z : array_like of {0, 1}
    caliper : float
        Maximum allowed ``|logit e_i - logit e_j|`` in units of the standard
        deviation of the logit scores.
    covariates : array_like, optional
        Used only for the balance report.

    Returns
    -------
    MatchResult

    Notes
    -----
    Treated units are visited in decreasing propensity; each joins the set
    of the nearest control within the caliper (a control may collect several
    treated units). Controls left over then join the set of their nearest
    treated unit within the caliper. Distance ties prefer an unused control, then the lower index.
    """
    D = np.asarray(dist, dtype=float)
    e = np.asarray(scores, dtype=float)
    z = np.asarray(z).astype(int)
    n = len(z)
    if D.shape != (n, n) or e.shape != (n,):
        raise ValidationError("dist, scores and z have inconsistent sizes")
    if not caliper > 0:
        raise ValidationError("caliper must be positive")
    logit = np.log(e) - np.log1p(-e)
    width = caliper * logit.std(ddof=1) if n > 1 else np.inf
    if not width > 0:
        width = np.inf
    treated = np.flatnonzero(z == 1)
    controls = np.flatnonzero(z == 0)
    eligible = np.abs(logit[:, None] - logit[None, :]) <= width

    set_of = np.zeros(n, dtype=int)
    unmatched = {}
    n_sets = 0
    order = treated[np.lexsort((treated, -e[treated]))]
    for t in order:
        ok = controls[eligible[t, controls]]
        if len(ok) == 0:
            unmatched[int(t)] = "no control within the caliper"
            continue
        d = D[t, ok]
        nearest = ok[d == d.min()]
        # among equally near controls prefer one that is still unused
        unused = nearest[set_of[nearest] == 0]
        c = unused[0] if len(unused) else nearest[0]
        if set_of[c] == 0:
            n_sets += 1
            set_of[c] = n_sets
        set_of[t] = set_of[c]
    matched_treated = treated[set_of[treated] > 0]
    for c in controls[set_of[controls] == 0]:
        ok = matched_treated[eligible[c, matched_treated]]
        if len(ok) == 0:
            unmatched[int(c)] = "no matched treated unit within the caliper"
            continue
        set_of[c] = set_of[ok[np.argmin(D[c, ok])]]
    if n_sets == 0:
        raise MatchingError("no treated/control pair lies within the caliper; try a larger caliper")

    # relabel sets 1..n_sets in order of first appearance for determinism
    _, first = np.unique(set_of, return_index=True)
    labels = [set_of[i] for i in sorted(first) if set_of[i] > 0]
    relabel = np.zeros(n_sets + 1, dtype=int)
    relabel[labels] = np.arange(1, len(labels) + 1)
    set_of = relabel[set_of]
    _assert_mixed(set_of, z)

    balance = {}
    if covariates is not None:
        x = np.asarray(covariates, dtype=float).reshape(n, -1)
        scale = np.sqrt(0.5 * (x[z == 1].var(axis=0, ddof=1) + x[z == 0].var(axis=0, ddof=1)))
        keep = set_of > 0
        balance = {
            "before": standardized_differences(x, z, scale=scale).tolist(),
            "after": standardized_differences(x[keep], z[keep], set_of[keep], scale=scale).tolist(),
        }
    return MatchResult(set_of, len(labels), unmatched, balance, float(width))


def _assert_mixed(set_of, z):
    for label in np.unique(set_of[set_of > 0]):
        members = z[set_of == label]
        if members.min() == members.max():
            raise MatchingError(f"matched set {label} is not mixed")


def stratify_by_matching(data: StratifiedDataset, caliper: float = DEFAULT_CALIPER):
    """Replace the strata of ``data`` by matched sets.

    Unmatched units are dropped and ``lambda_hat`` becomes the share
    ``m_s / N`` of each set among the matched units.

    Returns
    -------
    StratifiedDataset, MatchResult
    """
    if data.covariates is None or data.covariates.shape[1] == 0:
        raise ValidationError("matching needs covariates")
    model = estimate_propensity(data.covariates, data.z)
    D = rank_mahalanobis(data.covariates)
    result = full_match_caliper(D, model.fitted_scores, data.z, caliper, data.covariates)
    keep = np.flatnonzero(result.matched)
    s = result.stratum_of[keep]
    pt = None if data.potential_treated is None else data.potential_treated[keep]
    pc = None if data.potential_control is None else data.potential_control[keep]
    matched = StratifiedDataset(data.manifold, data.z[keep], s, data.outcomes[keep],
                                empirical_lambda(s, result.n_sets), data.covariates[keep],
                                [data.ids[i] for i in keep], pt, pc)
    return matched, result
