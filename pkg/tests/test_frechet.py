import numpy as np
import pytest

from metric_causal.errors import EmptyCellError, ValidationError
from metric_causal.frechet import (SolverOptions, WeightedSample, stratification_weights, weighted_gradient,
                                   weighted_l_alpha_estimator, weighted_objective)
from metric_causal.geometry import Euclidean, Hyperbolic2, KendallShape, Sphere2
from oracles import bounded_tangent, cloud, directional_fd, sphere_center_oracle, weighted_median_1d

MANIFOLDS = [Sphere2(), Hyperbolic2(), Euclidean(3), KendallShape(10)]
IDS = ["sphere2", "hyperbolic2", "euclidean3", "kendall10"]


def random_weights(rng, n):
    w = rng.uniform(0.1, 1.0, n)
    return w / w.sum()


@pytest.mark.parametrize("alpha", [2, 1])
def test_sphere_matches_grid_oracle(alpha):
    rng = np.random.default_rng(10 + alpha)
    for _ in range(10):
        pts = cloud(Sphere2(), rng, 5, spread=0.8)
        w = random_weights(rng, 5)
        res = weighted_l_alpha_estimator(WeightedSample(Sphere2(), pts, w), alpha)
        oracle = sphere_center_oracle(pts, w, alpha)
        assert res.converged
        assert Sphere2().dist(res.minimizer, oracle) < 5e-3


def test_euclidean_weighted_mean_closed_form():
    rng = np.random.default_rng(12)
    m = Euclidean(4)
    for _ in range(20):
        pts = rng.normal(size=(15, 4))
        w = random_weights(rng, 15)
        res = weighted_l_alpha_estimator(WeightedSample(m, pts, w), 2)
        assert np.max(np.abs(res.minimizer - w @ pts)) < 1e-9


def test_euclidean_weighted_median_1d():
    rng = np.random.default_rng(13)
    m = Euclidean(1)
    for _ in range(20):
        x = rng.normal(size=11)
        w = random_weights(rng, 11)
        res = weighted_l_alpha_estimator(WeightedSample(m, x[:, None], w), 1)
        assert abs(res.minimizer[0] - weighted_median_1d(x, w)) < 1e-9


def test_median_resists_outlier():
    m = Euclidean(1)
    pts = np.array([[0.0], [0.0], [0.0], [0.0], [100.0]])
    w = np.full(5, 0.2)
    assert weighted_l_alpha_estimator(WeightedSample(m, pts, w), 1).minimizer[0] == pytest.approx(0.0, abs=1e-12)
    assert weighted_l_alpha_estimator(WeightedSample(m, pts, w), 2).minimizer[0] == pytest.approx(20.0)


@pytest.mark.parametrize("alpha", [2, 1])
@pytest.mark.parametrize("m", MANIFOLDS, ids=IDS)
def test_gradient_matches_finite_differences(m, alpha):
    rng = np.random.default_rng(14)
    for _ in range(25):
        pts = cloud(m, rng, 8)
        sample = WeightedSample(m, pts, random_weights(rng, 8))
        p = m.exp(pts[0], bounded_tangent(m, pts[0], rng, 0.3)[0])
        g = weighted_gradient(sample, p, alpha)
        h = bounded_tangent(m, p, rng, 1.0)[0]
        h = h / m.norm(p, h)
        fd = directional_fd(lambda q: weighted_objective(sample, q, alpha), m, p, h)
        assert abs(fd - m.inner(p, g, h)) <= 1e-5 * max(m.norm(p, g), 1e-3)


@pytest.mark.parametrize("alpha", [2, 1])
@pytest.mark.parametrize("m", MANIFOLDS, ids=IDS)
def test_solver_descends_and_converges(m, alpha):
    rng = np.random.default_rng(15)
    pts = cloud(m, rng, 30)
    res = weighted_l_alpha_estimator(WeightedSample(m, pts, random_weights(rng, 30)), alpha)
    assert res.converged
    assert np.all(np.diff(res.objective_trace) <= 1e-12 * max(1.0, res.objective_trace[0]))


@pytest.mark.parametrize("m", MANIFOLDS, ids=IDS)
def test_permutation_invariance(m):
    rng = np.random.default_rng(16)
    pts = cloud(m, rng, 20)
    w = random_weights(rng, 20)
    perm = rng.permutation(20)
    for alpha in (1, 2):
        a = weighted_l_alpha_estimator(WeightedSample(m, pts, w), alpha)
        b = weighted_l_alpha_estimator(WeightedSample(m, pts[perm], w[perm]), alpha)
        assert m.dist(a.minimizer, b.minimizer) < 1e-6
        assert a.objective_value == pytest.approx(b.objective_value, rel=1e-10, abs=1e-14)


def test_single_point_and_zero_weights():
    m = Sphere2()
    p = np.array([0.0, 0.6, 0.8])
    res = weighted_l_alpha_estimator(WeightedSample(m, p[None], np.ones(1)), 2)
    assert np.allclose(res.minimizer, p)
    pts = np.stack([p, [1.0, 0.0, 0.0]])
    res = weighted_l_alpha_estimator(WeightedSample(m, pts, np.array([1.0, 0.0])), 1)
    assert np.allclose(res.minimizer, p)


def test_iteration_cap_reports_nonconvergence():
    rng = np.random.default_rng(17)
    pts = cloud(Sphere2(), rng, 40)
    opts = SolverOptions(max_iterations=1, gradient_tolerance=1e-15)
    res = weighted_l_alpha_estimator(WeightedSample(Sphere2(), pts, random_weights(rng, 40)), 1, opts)
    assert not res.converged and res.iterations <= 1


def test_symmetric_pair_flags_nonuniqueness():
    # every point of [0, 1] is a median of {0, 1}
    m = Euclidean(1)
    pts = np.array([[0.0], [1.0]])
    with pytest.warns(RuntimeWarning):
        res = weighted_l_alpha_estimator(WeightedSample(m, pts, np.full(2, 0.5)), 1, check_uniqueness=True,
                                         rng=np.random.default_rng(0))
    assert res.nonunique


def test_sample_validation():
    m = Sphere2()
    pts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(ValidationError):
        WeightedSample(m, pts, np.array([0.5, 0.6]))
    with pytest.raises(ValidationError):
        WeightedSample(m, pts, np.array([1.5, -0.5]))
    with pytest.raises(ValidationError):
        weighted_l_alpha_estimator(WeightedSample(m, pts, np.array([0.5, 0.5])), 3)


def test_stratification_weights_give_lambda_per_stratum():
    z = np.array([1, 1, 0, 1, 0, 0, 1])
    s = np.array([1, 1, 1, 2, 2, 2, 2])
    lam = np.array([0.3, 0.7])
    w = stratification_weights(z, s, lam, "treated")
    assert np.allclose([w[(s == k) & (z == 1)].sum() for k in (1, 2)], lam)
    assert np.all(w[z == 0] == 0)
    assert np.allclose(w[[0, 1, 3, 6]], [0.15, 0.15, 0.35, 0.35])
    with pytest.raises(EmptyCellError):
        stratification_weights(np.array([1, 1, 0]), np.array([1, 2, 2]), lam, "control")
