import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from metric_causal.errors import ValidationError
from metric_causal.estimands import estimate_t_alpha, naive_nested_estimator
from metric_causal.frechet import solve
from metric_causal.geometry import Hyperbolic2, Sphere2
from metric_causal.sampling import (BASE_POINT, ScenarioConfig, effect_centers, example1_dataset,
                                    example1_meridian_colatitude, example1_naive_limit, example1_points,
                                    generate_scenario, sample_riemannian_normal, tangent_basis)

SIGMA2 = (np.pi / 8) ** 2


def radial_cdf_oracle(manifold, sigma2):
    jac = np.sin if isinstance(manifold, Sphere2) else np.sinh
    upper = np.pi if isinstance(manifold, Sphere2) else 30 * np.sqrt(sigma2) + 3 * sigma2

    def dens(r):
        return np.exp(-r * r / (2 * sigma2)) * jac(r)

    # adaptive quadrature on each of 2000 intervals, accumulated and interpolated
    knots = np.linspace(0.0, upper, 2001)
    cdf = np.concatenate([[0.0], np.cumsum([quad(dens, a, b)[0] for a, b in zip(knots[:-1], knots[1:])])])
    return lambda x: np.interp(x, knots, cdf / cdf[-1])


@pytest.mark.parametrize("m", [Sphere2(), Hyperbolic2()], ids=["sphere2", "hyperbolic2"])
def test_radial_distribution_passes_ks(m):
    rng = np.random.default_rng(50)
    mu = m.exp(BASE_POINT, np.array([0.0, 0.3, -0.2]) if isinstance(m, Sphere2) else np.array([0.0, 0.3, -0.2]))
    mu = m.validate_point(mu / (np.linalg.norm(mu) if isinstance(m, Sphere2) else 1.0))
    draws = sample_riemannian_normal(m, mu, SIGMA2, rng, size=4000)
    r = m.dist(mu, draws)
    assert kstest(r, radial_cdf_oracle(m, SIGMA2)).pvalue > 0.01


def test_angle_is_uniform():
    rng = np.random.default_rng(51)
    m = Sphere2()
    draws = sample_riemannian_normal(m, BASE_POINT, SIGMA2, rng, size=4000)
    e1, e2 = tangent_basis(m, BASE_POINT)
    v = m.log(BASE_POINT, draws)
    angle = np.mod(np.arctan2(v @ e2, v @ e1), 2 * np.pi)
    assert kstest(angle / (2 * np.pi), "uniform").pvalue > 0.01


@pytest.mark.parametrize("m", [Sphere2(), Hyperbolic2()], ids=["sphere2", "hyperbolic2"])
def test_empirical_mean_near_mu(m):
    rng = np.random.default_rng(52)
    n = 100_000
    draws = sample_riemannian_normal(m, BASE_POINT, SIGMA2, rng, size=n)
    mean = solve(m, draws, np.full(n, 1.0 / n), 2).minimizer
    basis = tangent_basis(m, BASE_POINT)
    coords = m.log(BASE_POINT, draws) @ basis.T
    offset = m.log(BASE_POINT, mean) @ basis.T
    se = coords.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(offset) <= 3 * se)


def test_tiny_variance_concentrates():
    rng = np.random.default_rng(53)
    for m in (Sphere2(), Hyperbolic2()):
        draws = sample_riemannian_normal(m, BASE_POINT, 1e-8, rng, size=1000)
        assert np.max(m.dist(BASE_POINT, draws)) < 1e-3


def test_invalid_inputs():
    from metric_causal.geometry import Euclidean

    with pytest.raises(ValidationError):
        sample_riemannian_normal(Sphere2(), BASE_POINT, 0.0, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        sample_riemannian_normal(Euclidean(3), np.zeros(3), 1.0, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        ScenarioConfig(5, 10)
    with pytest.raises(ValidationError):
        example1_points(0.0)


@pytest.mark.parametrize("m", [Sphere2(), Hyperbolic2()], ids=["sphere2", "hyperbolic2"])
def test_true_effect_is_two(m):
    zt, zc = effect_centers(m)
    assert m.dist(zt, zc) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_noise_free_scenario_recovers_effect(scenario):
    rng = np.random.default_rng(54)
    cfg = ScenarioConfig(scenario, 64, 1e-12, covariate_effects=False)
    d = generate_scenario(cfg, rng)
    for alpha in (2, 1):
        assert estimate_t_alpha(d, alpha).value == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("scenario", [1, 3])
def test_reproducible_and_consistent(scenario):
    cfg = ScenarioConfig(scenario, 200)
    a = generate_scenario(cfg, np.random.default_rng(7))
    b = generate_scenario(cfg, np.random.default_rng(7))
    assert np.array_equal(a.outcomes, b.outcomes) and np.array_equal(a.z, b.z) and np.array_equal(a.s, b.s)
    chosen = np.where(a.z[:, None] == 1, a.potential_treated, a.potential_control)
    assert np.array_equal(chosen, a.outcomes)
    assert isinstance(a.manifold, Sphere2 if scenario == 1 else Hyperbolic2)


def test_randomized_design_strata_and_assignment():
    rng = np.random.default_rng(55)
    d = generate_scenario(ScenarioConfig(1, 4000), rng)
    assert np.array_equal(d.s, np.where(d.covariates[:, 0] >= 0, 1, 2))
    assert abs(np.mean(d.s == 1) - 0.5) < 4 * 0.5 / np.sqrt(4000)
    for label in (1, 2):
        m = np.sum(d.s == label)
        assert d.z[d.s == label].sum() == (m + 1) // 2
    assert np.allclose(d.lambda_hat, [0.5, 0.5])


def test_observational_assignment_follows_logistic_curve():
    rng = np.random.default_rng(56)
    d = generate_scenario(ScenarioConfig(3, 20000), rng)
    eta = d.covariates.sum(axis=1)
    bins = np.linspace(-1, 1, 6)
    for lo, hi in zip(bins[:-1], bins[1:]):
        inside = (eta >= lo) & (eta < hi)
        p = np.mean(1 / (1 + np.exp(-eta[inside])))
        se = np.sqrt(p * (1 - p) / inside.sum())
        assert abs(d.z[inside].mean() - p) < 4 * se
    assert d.xi == 1


def test_example1_colatitude_matches_arc_midpoint():
    for c in (np.pi / 100, np.pi / 8, np.pi / 4, 1.2):
        # the Fréchet mean of two points is their arc midpoint, the normalised sum
        expected = np.arctan2(np.sin(c), 2 * np.cos(c))
        assert example1_meridian_colatitude(c) == pytest.approx(expected, abs=1e-8)
    assert example1_naive_limit(np.pi / 4) == pytest.approx(0.094598, abs=1e-6)


def test_example1_points_geometry():
    c = np.pi / 4
    treated, control, strata = example1_points(c)
    north = np.array([0.0, 0.0, 1.0])
    assert np.allclose(Sphere2().dist(north, treated), c)
    assert np.allclose(Sphere2().dist(north, control), c)
    assert np.array_equal(strata, [1, 2, 2])


def test_example1_estimators():
    rng = np.random.default_rng(57)
    d = example1_dataset(np.pi / 4, 3000, rng)
    assert estimate_t_alpha(d, 2).value <= 0.05
    assert abs(naive_nested_estimator(d, 2).value - example1_naive_limit(np.pi / 4)) <= 0.05
    d = example1_dataset(np.pi / 100, 3000, rng)
    assert estimate_t_alpha(d, 2).value < 0.01
    assert naive_nested_estimator(d, 2).value < 0.01
