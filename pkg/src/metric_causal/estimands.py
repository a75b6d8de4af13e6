"""Stratified estimators of the absolute average / median treatment effect.

``T_alpha`` is the geodesic distance between the stratification-weighted
``L_alpha`` centres of the treated and the control outcomes; ``alpha=2`` gives
the AATE estimator and ``alpha=1`` the AMTE estimator.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyCellError, ValidationError
from .frechet import DEFAULT_OPTIONS, SolverOptions, SolverResult, solve, stratification_weights
from .geometry import Manifold, ManifoldPoint

LAMBDA_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Unit:
    """One experimental unit, as produced by :meth:`StratifiedDataset.units`."""

    id: str
    z: int
    s: int
    x: np.ndarray
    r: ManifoldPoint
    potential: tuple | None = None


def empirical_lambda(s, xi=None):
    """Stratum shares ``m_s / N`` for labels ``1..xi``."""
    s = np.asarray(s, dtype=int)
    xi = int(xi if xi is not None else s.max())
    return np.bincount(s, minlength=xi + 1)[1:] / len(s)


@dataclass(eq=False)
class StratifiedDataset:
    """Units sharing one outcome manifold, stored column-wise.

    Parameters
    ----------
    manifold : Manifold
    z : array_like of {0, 1}, shape (N,)
        Treatment indicators.
    s : array_like of int, shape (N,)
        Stratum labels ``1..xi``.
    outcomes : array_like, shape (N, *manifold.ambient_shape)
        Observed outcomes ``r_i``.
    lambda_hat : array_like, shape (xi,), optional
        Stratum weights; defaults to the empirical shares ``m_s / N``.
    covariates : array_like, shape (N, k), optional
    ids : sequence of str, optional
    potential_treated, potential_control : array_like, optional
        Both potential outcomes (simulation only). When given, ``outcomes``
        must equal the one selected by ``z``.

    Raises
    ------
    EmptyCellError
        If some stratum lacks treated or control units.
    """

    manifold: Manifold
    z: np.ndarray
    s: np.ndarray
    outcomes: np.ndarray
    lambda_hat: np.ndarray | None = None
    covariates: np.ndarray | None = None
    ids: list | None = None
    potential_treated: np.ndarray | None = field(default=None, repr=False)
    potential_control: np.ndarray | None = field(default=None, repr=False)
    xi: int = field(init=False)

    def __post_init__(self):
        self.z = np.asarray(self.z).astype(int)
        self.s = np.asarray(self.s).astype(int)
        n = len(self.z)
        if self.z.shape != (n,) or self.s.shape != (n,):
            raise ValidationError("z and s must be one-dimensional and of equal length")
        if n == 0:
            raise ValidationError("dataset has no units")
        if not np.all((self.z == 0) | (self.z == 1)):
            raise ValidationError("treatment indicators must be 0 or 1")
        if self.s.min() < 1:
            raise ValidationError("stratum labels start at 1")
        self.outcomes = self.manifold.validate_point(np.asarray(self.outcomes))
        if len(self.outcomes) != n:
            raise ValidationError("outcomes and treatment indicators differ in length")
        if self.lambda_hat is None:
            self.lambda_hat = empirical_lambda(self.s)
        self.lambda_hat = np.asarray(self.lambda_hat, dtype=float)
        self.xi = len(self.lambda_hat)
        if self.s.max() > self.xi:
            raise ValidationError(f"stratum label {self.s.max()} exceeds the {self.xi} stratum weights")
        if abs(self.lambda_hat.sum() - 1.0) > LAMBDA_TOL or np.any(self.lambda_hat < 0):
            raise ValidationError("lambda_hat must be nonnegative and sum to 1")
        for group, flag in (("treated", 1), ("control", 0)):
            counts = np.bincount(self.s[self.z == flag], minlength=self.xi + 1)[1:]
            if np.any(counts == 0):
                raise EmptyCellError(int(np.argmin(counts)) + 1, group)
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float).reshape(n, -1)
        if self.ids is None:
            self.ids = [str(i) for i in range(n)]
        elif len(self.ids) != n:
            raise ValidationError("ids and units differ in length")
        if (self.potential_treated is None) != (self.potential_control is None):
            raise ValidationError("give both potential outcomes or neither")
        if self.potential_treated is not None:
            rt = self.manifold.validate_point(np.asarray(self.potential_treated))
            rc = self.manifold.validate_point(np.asarray(self.potential_control))
            chosen = np.where(self.z.reshape((n,) + (1,) * (rt.ndim - 1)) == 1, rt, rc)
            if not np.array_equal(chosen, self.outcomes):
                raise ValidationError("observed outcomes disagree with the potential outcomes selected by z")
            self.potential_treated, self.potential_control = rt, rc

    def __len__(self):
        return len(self.z)

    @property
    def treated_counts(self):
        return np.bincount(self.s[self.z == 1], minlength=self.xi + 1)[1:]

    @property
    def control_counts(self):
        return np.bincount(self.s[self.z == 0], minlength=self.xi + 1)[1:]

    def with_assignment(self, z):
        """Same outcomes and strata under a different treatment vector.

        The observed outcomes are kept as they are, which is what Fisher's
        sharp null implies; potential outcomes are dropped.
        """
        return replace(self, z=np.asarray(z), potential_treated=None, potential_control=None)

    def subset(self, idx, lambda_hat=None):
        """Units ``idx`` (with repetition allowed); ``lambda_hat`` defaults to empirical shares."""
        idx = np.asarray(idx)
        s = self.s[idx]
        pt = None if self.potential_treated is None else self.potential_treated[idx]
        pc = None if self.potential_control is None else self.potential_control[idx]
        return StratifiedDataset(
            self.manifold, self.z[idx], s, self.outcomes[idx],
            lambda_hat if lambda_hat is not None else empirical_lambda(s, self.xi),
            None if self.covariates is None else self.covariates[idx],
            [self.ids[i] for i in idx], pt, pc,
        )

    def units(self):
        """Yield one :class:`Unit` per row."""
        x = self.covariates if self.covariates is not None else np.empty((len(self), 0))
        for i in range(len(self)):
            pot = None
            if self.potential_treated is not None:
                pot = (ManifoldPoint(self.manifold, self.potential_treated[i]),
                       ManifoldPoint(self.manifold, self.potential_control[i]))
            yield Unit(self.ids[i], int(self.z[i]), int(self.s[i]), x[i],
                       ManifoldPoint(self.manifold, self.outcomes[i]), pot)

    @classmethod
    def from_units(cls, units, lambda_hat=None, xi=None):
        units = list(units)
        if not units:
            raise ValidationError("no units given")
        m = units[0].r.manifold
        if any(u.r.manifold != m for u in units):
            raise ValidationError("units live on different manifolds")
        s = np.array([u.s for u in units])
        if lambda_hat is None:
            lambda_hat = empirical_lambda(s, xi)
        pt = pc = None
        if all(u.potential is not None for u in units):
            pt = np.stack([u.potential[0].coords for u in units])
            pc = np.stack([u.potential[1].coords for u in units])
        return cls(m, [u.z for u in units], s, np.stack([u.r.coords for u in units]), lambda_hat,
                   np.stack([np.asarray(u.x, dtype=float) for u in units]), [u.id for u in units], pt, pc)


@dataclass
class EffectEstimate:
    alpha: int
    value: float
    treated_center: np.ndarray
    control_center: np.ndarray
    solver_diagnostics: tuple[SolverResult, ...] = field(repr=False, default=())

    @property
    def converged(self):
        return all(r.converged for r in self.solver_diagnostics)


def _check_alpha(alpha):
    if alpha not in (1, 2):
        raise ValidationError(f"alpha must be 1 or 2, got {alpha!r}")


def group_center(data: StratifiedDataset, alpha, group, opts=None, backend=None) -> SolverResult:
    """Stratification-weighted ``L_alpha`` centre of one treatment group."""
    w = stratification_weights(data.z, data.s, data.lambda_hat, group)
    return solve(data.manifold, data.outcomes, w, alpha, opts or DEFAULT_OPTIONS, backend=backend)


def estimate_t_alpha(data: StratifiedDataset, alpha: int, opts: SolverOptions | None = None,
                     backend=None) -> EffectEstimate:
    """Distance between the weighted treated and control ``L_alpha`` centres.

    Parameters
    ----------
    data : StratifiedDataset
    alpha : {1, 2}
    opts : SolverOptions, optional

    Returns
    -------
    EffectEstimate
        ``solver_diagnostics`` holds the treated and control solver results;
        check ``converged`` before trusting the value.
    """
    _check_alpha(alpha)
    treated = group_center(data, alpha, "treated", opts, backend)
    control = group_center(data, alpha, "control", opts, backend)
    value = float(data.manifold.dist(control.minimizer, treated.minimizer))
    return EffectEstimate(alpha, value, treated.minimizer, control.minimizer, (treated, control))


def naive_nested_estimator(data: StratifiedDataset, alpha: int, opts: SolverOptions | None = None,
                           backend=None) -> EffectEstimate:
    """Centre of per-stratum centres, weighted by ``lambda_hat``.

    Inconsistent in general on curved spaces; kept as a negative control.
    """
    _check_alpha(alpha)
    opts = opts or DEFAULT_OPTIONS
    m = data.manifold
    diags = []
    centers = {}
    for group, flag in (("treated", 1), ("control", 0)):
        per_stratum = []
        for s in range(1, data.xi + 1):
            member = (data.s == s) & (data.z == flag)
            if not np.any(member):
                raise EmptyCellError(s, group)
            w = np.full(member.sum(), 1.0 / member.sum())
            res = solve(m, data.outcomes[member], w, alpha, opts, backend=backend)
            diags.append(res)
            per_stratum.append(res.minimizer)
        res = solve(m, np.stack(per_stratum), data.lambda_hat, alpha, opts, backend=backend)
        diags.append(res)
        centers[group] = res.minimizer
    value = float(m.dist(centers["control"], centers["treated"]))
    return EffectEstimate(alpha, value, centers["treated"], centers["control"], tuple(diags))
