import numpy as np
import pytest

from metric_causal.errors import MatchingError, SeparationError, ValidationError
from metric_causal.matching import (estimate_propensity, full_match_caliper, rank_mahalanobis,
                                    standardized_differences, stratify_by_matching)
from metric_causal.sampling import ScenarioConfig, generate_scenario


def logistic_data(rng, n):
    x = rng.uniform(-0.5, 0.5, size=(n, 2)) * 4
    z = (rng.uniform(size=n) < 1 / (1 + np.exp(-x[:, 0] - x[:, 1]))).astype(int)
    return x, z


def test_propensity_recovers_coefficients():
    rng = np.random.default_rng(60)
    x, z = logistic_data(rng, 5000)
    model = estimate_propensity(x, z)
    assert np.allclose(model.coefficients, [0.0, 1.0, 1.0], atol=0.1)
    assert np.all((model.fitted_scores > 0) & (model.fitted_scores < 1))
    assert np.allclose(model.predict(x), model.fitted_scores)


def test_propensity_solves_score_equations():
    rng = np.random.default_rng(61)
    x, z = logistic_data(rng, 300)
    model = estimate_propensity(x, z)
    X = np.column_stack([np.ones(len(z)), x])
    assert np.max(np.abs(X.T @ (z - model.fitted_scores))) < 1e-8


def test_propensity_zero_covariates_and_duplication():
    rng = np.random.default_rng(62)
    z = (rng.uniform(size=50) < 0.3).astype(int)
    model = estimate_propensity(np.zeros((50, 2)), z)
    assert model.coefficients[0] == pytest.approx(np.log(z.mean() / (1 - z.mean())), abs=1e-10)
    assert np.allclose(model.coefficients[1:], 0.0, atol=1e-12)
    x, z = logistic_data(rng, 200)
    once = estimate_propensity(x, z).coefficients
    twice = estimate_propensity(np.vstack([x, x]), np.concatenate([z, z])).coefficients
    assert np.allclose(once, twice, atol=1e-8)


def test_separation_raises_with_direction():
    x = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    z = np.array([0, 0, 0, 1, 1, 1])
    with pytest.raises(SeparationError) as info:
        estimate_propensity(x, z)
    assert "direction" in str(info.value)


def test_propensity_input_checks():
    with pytest.raises(ValidationError):
        estimate_propensity(np.zeros((3, 2)), np.array([0, 1, 0]))
    with pytest.raises(ValidationError):
        estimate_propensity(np.zeros((10, 1)), np.zeros(10, dtype=int))


def test_rank_mahalanobis_one_covariate():
    D = rank_mahalanobis(np.array([[1.0], [2.0], [3.0]]))
    assert D[0, 2] == pytest.approx(2 * D[0, 1])
    # ranks 1,2,3 have sample sd 1, so one rank step is distance 1
    assert D[0, 1] == pytest.approx(1.0)


def test_rank_mahalanobis_properties():
    rng = np.random.default_rng(63)
    x = rng.normal(size=(40, 3))
    D = rank_mahalanobis(x)
    assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0)
    y = x.copy()
    y[:, 1] = np.exp(y[:, 1])
    assert np.max(np.abs(rank_mahalanobis(y) - D)) < 1e-12


def test_rank_mahalanobis_singular_covariance_falls_back():
    x = np.column_stack([np.arange(6.0), np.arange(6.0)])
    D = rank_mahalanobis(x)
    assert np.all(np.isfinite(D))


def test_identical_units_form_two_pairs():
    D = np.zeros((4, 4))
    res = full_match_caliper(D, np.full(4, 0.5), np.array([1, 1, 0, 0]), covariates=np.ones((4, 2)))
    assert res.n_sets == 2
    assert sorted(np.bincount(res.stratum_of)[1:]) == [2, 2]
    assert np.allclose(res.balance_report["after"], 0.0)


def test_control_outside_caliper_is_unmatched():
    z = np.array([1, 0, 1, 0, 0])
    scores = np.array([0.5, 0.5, 0.52, 0.51, 0.99])
    D = np.abs(np.subtract.outer(scores, scores))
    res = full_match_caliper(D, scores, z, caliper=0.2)
    assert res.stratum_of[4] == 0
    assert 4 in res.unmatched
    assert np.all(res.stratum_of[:4] > 0)


def test_no_feasible_pair_raises():
    z = np.array([1, 1, 0, 0])
    scores = np.array([0.9, 0.91, 0.1, 0.11])
    D = np.ones((4, 4))
    with pytest.raises(MatchingError):
        full_match_caliper(D, scores, z, caliper=0.01)


def test_matched_sets_mixed_and_deterministic():
    rng = np.random.default_rng(64)
    x, z = logistic_data(rng, 300)
    model = estimate_propensity(x, z)
    D = rank_mahalanobis(x)
    a = full_match_caliper(D, model.fitted_scores, z, covariates=x)
    b = full_match_caliper(D, model.fitted_scores, z, covariates=x)
    assert np.array_equal(a.stratum_of, b.stratum_of)
    for label in range(1, a.n_sets + 1):
        members = z[a.stratum_of == label]
        assert members.min() == 0 and members.max() == 1
    first_seen = [a.stratum_of[i] for i in range(len(z)) if a.stratum_of[i] > 0]
    assert first_seen[0] == 1


def test_scenario3_balance():
    rng = np.random.default_rng(65)
    for _ in range(5):
        raw = generate_scenario(ScenarioConfig(3, 256), rng)
        matched, res = stratify_by_matching(raw)
        assert np.all(np.abs(res.balance_report["after"]) <= 0.2)
        assert len(matched) + len(res.unmatched) == 256
        assert np.isclose(matched.lambda_hat.sum(), 1.0)


def test_standardized_differences_plain():
    x = np.array([[1.0], [3.0], [0.0], [2.0]])
    z = np.array([1, 1, 0, 0])
    pooled = np.sqrt(0.5 * (2.0 + 2.0))
    assert standardized_differences(x, z)[0] == pytest.approx(1.0 / pooled)
