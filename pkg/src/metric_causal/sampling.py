"""Riemannian normal draws and the simulated study designs.

Each simulation draws covariates, builds both potential outcomes by parallel
transport on ``S^2`` (randomized designs 1-2) or ``H^2`` (observational
designs 3-4), and assigns strata and treatment. The true effect in every
design is ``d(zeta_C, zeta_T) = 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .errors import EmptyCellError, ValidationError
from .estimands import StratifiedDataset, empirical_lambda
from .geometry import Hyperbolic2, Manifold, Sphere2

GRID_SIZE = 4096
DEFAULT_SIGMA2 = (np.pi / 8) ** 2
TRUE_EFFECT = 2.0

BASE_POINT = np.array([1.0, 0.0, 0.0])
COVARIATE_DIRECTIONS = np.array([[0.0, np.pi / 4, 0.0], [0.0, 0.0, -np.pi / 6]])
EFFECT_DIRECTION = np.array([0.0, 1.0, 0.0])


def tangent_basis(manifold: Manifold, p):
    """Orthonormal basis of the tangent space at ``p`` (Gram-Schmidt in the manifold metric)."""
    p = np.asarray(p, dtype=float)
    basis = []
    for e in np.eye(p.shape[-1]):
        u = manifold.project_tangent(p, e)
        for b in basis:
            u = u - manifold.inner(p, b, u) * b
        n = manifold.norm(p, u)
        if n > 1e-8:
            basis.append(u / n)
        if len(basis) == manifold.dimension:
            break
    return np.array(basis)


def _radial_grid(manifold, sigma2):
    sigma = np.sqrt(sigma2)
    # beyond sigma2 + 12 sigma the density is below exp(-72) of its peak
    upper = sigma2 + 12.0 * sigma
    if isinstance(manifold, Sphere2):
        r = np.linspace(0.0, min(np.pi, upper), GRID_SIZE)
        log_dens = -r * r / (2 * sigma2) + np.log(np.maximum(np.sin(r), 1e-300))
    elif isinstance(manifold, Hyperbolic2):
        r = np.linspace(0.0, upper, GRID_SIZE)
        # log sinh r without overflow for large r
        log_sinh = np.where(r < 20.0, np.log(np.maximum(np.sinh(np.minimum(r, 20.0)), 1e-300)), r - np.log(2.0))
        log_dens = -r * r / (2 * sigma2) + log_sinh
    else:
        raise ValidationError("Riemannian normal sampling is available on Sphere2 and Hyperbolic2 only")
    dens = np.exp(log_dens - np.max(log_dens))
    cdf = cumulative_trapezoid(dens, r, initial=0.0)
    return r, cdf / cdf[-1]


def radial_cdf(manifold, sigma2):
    """Grid ``(r, F(r))`` of the radial distribution of the Riemannian normal."""
    if not sigma2 > 0:
        raise ValidationError("sigma2 must be positive")
    return _radial_grid(manifold, sigma2)


def sample_riemannian_normal(manifold: Manifold, mu, sigma2: float, rng, size=None):
    """Draw from the density proportional to ``exp(-d(y, mu)^2 / (2 sigma2))``.

    Parameters
    ----------
    manifold : Sphere2 or Hyperbolic2
    mu : array_like, shape (3,)
    sigma2 : float
    rng : numpy.random.Generator
    size : int, optional
        Number of draws; a single point is returned when omitted.

    Notes
    -----
    The radius is drawn by inverting the numerically integrated radial
    density ``exp(-r^2 / (2 sigma2)) J(r)``, with ``J = sin`` on the sphere
    and ``sinh`` on the hyperboloid, over a grid of ``GRID_SIZE`` points. The
    direction is uniform in the tangent plane at ``mu``.
    """
    mu = manifold.validate_point(np.asarray(mu, dtype=float))
    n = 1 if size is None else int(size)
    r_grid, cdf = radial_cdf(manifold, sigma2)
    radius = np.interp(rng.uniform(size=n), cdf, r_grid)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
    e1, e2 = tangent_basis(manifold, mu)
    v = radius[:, None] * (np.cos(angle)[:, None] * e1 + np.sin(angle)[:, None] * e2)
    out = manifold.exp(mu, v)
    return out[0] if size is None else out


@dataclass(frozen=True)
class ScenarioConfig:
    """Settings of one simulated study.

    Parameters
    ----------
    scenario : {1, 2, 3, 4}
        1-2 are stratified randomized experiments on the sphere, 3-4
        observational studies on the hyperboloid.
    n : int
        Number of units.
    sigma2 : float
        Variance parameter of the Riemannian normal noise.
    lambda_policy : {"known", "empirical"}, optional
        Defaults to ``"known"`` (1/2, 1/2) for 1-2 and ``"empirical"`` for 3-4.
    covariate_effects : bool
        When False the covariate directions are set to zero.
    """

    scenario: int
    n: int
    sigma2: float = DEFAULT_SIGMA2
    lambda_policy: str | None = None
    covariate_effects: bool = True

    def __post_init__(self):
        if self.scenario not in (1, 2, 3, 4):
            raise ValidationError(f"scenario must be 1-4, got {self.scenario!r}")
        if int(self.n) < 2:
            raise ValidationError("n must be at least 2")
        if not self.sigma2 > 0:
            raise ValidationError("sigma2 must be positive")
        if self.lambda_policy not in (None, "known", "empirical"):
            raise ValidationError("lambda_policy must be 'known' or 'empirical'")

    @property
    def manifold(self):
        return Sphere2() if self.scenario in (1, 2) else Hyperbolic2()

    @property
    def randomized(self):
        return self.scenario in (1, 2)

    @property
    def policy(self):
        return self.lambda_policy or ("known" if self.randomized else "empirical")


def effect_centers(manifold):
    """``(zeta_T, zeta_C)``: the population treated and control centres."""
    return manifold.exp(BASE_POINT, EFFECT_DIRECTION), manifold.exp(BASE_POINT, -EFFECT_DIRECTION)


def potential_outcomes(manifold, x, noise, covariate_effects=True):
    """Both potential outcomes for covariates ``x`` (N, 2) and noise points ``noise`` (N, 3)."""
    p = BASE_POINT
    dirs = COVARIATE_DIRECTIONS if covariate_effects else np.zeros_like(COVARIATE_DIRECTIONS)
    shift = x @ dirs
    u = manifold.log(p, noise)
    out = []
    for zeta in effect_centers(manifold):
        r_prime = manifold.exp(zeta, manifold.transport(p, zeta, shift))
        base = np.broadcast_to(p, r_prime.shape)
        out.append(manifold.exp(r_prime, manifold.transport(base, r_prime, u)))
    return out[0], out[1]


def assign_within_strata(s, rng):
    """Complete randomization: ``floor((m+1)/2)`` of the ``m`` units of each stratum are treated."""
    s = np.asarray(s)
    z = np.zeros(len(s), dtype=int)
    for label in np.unique(s):
        members = np.flatnonzero(s == label)
        chosen = rng.permutation(members)[: (len(members) + 1) // 2]
        z[chosen] = 1
    return z


def logistic_assignment(x, rng):
    """Independent draws with ``pr(z=1) = 1 / (1 + exp(-x1 - x2))``."""
    prob = 1.0 / (1.0 + np.exp(-x[:, 0] - x[:, 1]))
    return (rng.uniform(size=len(x)) < prob).astype(int)


def generate_scenario(config: ScenarioConfig, rng, impose_sharp_null: bool = False) -> StratifiedDataset:
    """Simulate one dataset.

    For scenarios 1-2 units with ``x1 >= 0`` form stratum 1 and the rest
    stratum 2, and treatment is completely randomized within strata. For
    scenarios 3-4 treatment follows the logistic model and every unit is
    placed in a single placeholder stratum; matching (see
    :func:`metric_causal.matching.stratify_by_matching`) supplies the strata.

    Parameters
    ----------
    impose_sharp_null : bool
        Set the control potential outcome equal to the treated one.

    Raises
    ------
    EmptyCellError
        If a stratum lacks treated or control units. The caller is expected
        to draw a fresh replicate.
    """
    m = config.manifold
    n = int(config.n)
    x = rng.uniform(-0.5, 0.5, size=(n, 2))
    noise = sample_riemannian_normal(m, BASE_POINT, config.sigma2, rng, size=n)
    r_t, r_c = potential_outcomes(m, x, noise, config.covariate_effects)
    if impose_sharp_null:
        r_c = r_t.copy()
    if config.randomized:
        s = np.where(x[:, 0] >= 0, 1, 2)
        for label in (1, 2):
            size = np.sum(s == label)
            if size < 2:
                raise EmptyCellError(label, "treated" if size == 0 else "control")
        z = assign_within_strata(s, rng)
        lam = np.array([0.5, 0.5]) if config.policy == "known" else empirical_lambda(s, 2)
    else:
        s = np.ones(n, dtype=int)
        z = logistic_assignment(x, rng)
        if z.sum() in (0, n):
            raise EmptyCellError(1, "treated" if z.sum() == 0 else "control")
        lam = np.array([1.0])
    r = np.where(z[:, None] == 1, r_t, r_c)
    return StratifiedDataset(m, z, s, r, lam, x, None, r_t, r_c)


def _bounded_tangent(manifold, p, rng, max_norm):
    u = manifold.random_tangent(p, rng)
    return u * (max_norm * rng.uniform() / manifold.norm(p, u))


def random_two_group_dataset(manifold: Manifold, n: int, rng, spread: float = 0.8,
                             n_strata: int = 2, max_tries: int = 100) -> StratifiedDataset:
    """A random stratified dataset with a geodesic shift between the groups.

    A centre ``c`` is drawn (uniformly on the sphere, within distance 1.5 of
    the origin elsewhere), the treated group is shifted along a random
    tangent of norm below ``spread``, and every outcome gets independent
    tangent noise of norm below ``spread``. Treatment and strata are fair
    coin flips; draws leaving a cell empty are repeated.
    """
    origin = np.zeros(manifold.ambient_shape)
    if isinstance(manifold, Hyperbolic2):
        origin[0] = 1.0
    for _ in range(max_tries):
        if isinstance(manifold, Sphere2):
            c = manifold.random_point(rng)
        else:
            c = manifold.exp(origin, _bounded_tangent(manifold, origin, rng, 1.5))
        z = rng.integers(0, 2, int(n))
        s = rng.integers(1, n_strata + 1, int(n))
        shift = _bounded_tangent(manifold, c, rng, spread)
        centres = [c, manifold.exp(c, shift)]
        ys = np.stack([manifold.exp(centres[zi], _bounded_tangent(manifold, centres[zi], rng, spread)) for zi in z])
        try:
            return StratifiedDataset(manifold, z, s, ys)
        except EmptyCellError:
            continue
    raise EmptyCellError(0, "treated or control")


# -- three-configuration counterexample: the naive nested estimator is inconsistent --


def example1_points(c):
    """Treated and control outcomes of the three equiprobable configurations.

    All points lie at colatitude ``c`` around the north pole. Treated points
    sit at longitudes 0, 120 and 240 degrees; each control point is the
    mirror image of its treated point in the plane ``x = 0``.

    Returns
    -------
    treated, control : ndarray, shape (3, 3)
    strata : ndarray, shape (3,)
    """
    if not 0.0 < c < np.pi / 2:
        raise ValidationError("c must lie in (0, pi/2)")
    lon = np.deg2rad([0.0, 120.0, 240.0])
    treated = np.stack([np.sin(c) * np.cos(lon), np.sin(c) * np.sin(lon), np.full(3, np.cos(c))], axis=1)
    control = treated * np.array([-1.0, 1.0, 1.0])
    return treated, control, np.array([1, 2, 2])


def example1_dataset(c: float, n: int, rng, lambda_policy: str = "empirical") -> StratifiedDataset:
    """I.i.d. draws from the counterexample distribution with within-stratum randomization.

    ``lambda_policy="known"`` uses the population shares (1/3, 2/3).
    """
    treated, control, strata = example1_points(c)
    k = rng.integers(0, 3, size=int(n))
    s = strata[k]
    z = assign_within_strata(s, rng)
    r_t, r_c = treated[k], control[k]
    r = np.where(z[:, None] == 1, r_t, r_c)
    lam = np.array([1 / 3, 2 / 3]) if lambda_policy == "known" else empirical_lambda(s, 2)
    return StratifiedDataset(Sphere2(), z, s, r, lam, None, None, r_t, r_c)


def example1_meridian_colatitude(c):
    """Colatitude ``t`` of the Fréchet mean of the two stratum-2 treated points.

    By symmetry the mean lies on the meridian at longitude 180 degrees; ``t``
    minimises the two-point Fréchet objective along it.
    """
    m = Sphere2()
    treated, _, _ = example1_points(c)
    pair = treated[1:]

    def objective(t):
        q = np.array([-np.sin(t), 0.0, np.cos(t)])
        return float(np.sum(m.dist(q, pair) ** 2))

    res = minimize_scalar(objective, bounds=(0.0, np.pi / 2), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def example1_naive_limit(c):
    """Almost-sure limit ``4t/3 - 2c/3`` of the naive nested estimator."""
    t = example1_meridian_colatitude(c)
    return 4.0 * t / 3.0 - 2.0 * c / 3.0
