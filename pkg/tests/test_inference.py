import numpy as np
import pytest

from metric_causal.errors import ValidationError
from metric_causal.estimands import StratifiedDataset, estimate_t_alpha
from metric_causal.geometry import Euclidean, Sphere2
from metric_causal.inference import (bootstrap_pivotal_ci, permute_within_strata, pivotal_interval,
                                     randomization_test)
from metric_causal.sampling import ScenarioConfig, generate_scenario


def test_pivotal_arithmetic_by_hand():
    reps = np.arange(1.0, 11.0)  # 1, ..., 10
    # type-7 quantiles: q(0.05) = 1 + 0.45 = 1.45, q(0.95) = 1 + 8.55 = 9.55
    lower, upper = pivotal_interval(6.0, reps, 0.90)
    assert lower == pytest.approx(12.0 - 9.55, abs=1e-12)
    assert upper == pytest.approx(12.0 - 1.45, abs=1e-12)
    lower, upper = pivotal_interval(1.0, reps, 0.90)
    assert lower == 0.0 and upper == pytest.approx(0.55, abs=1e-12)
    with pytest.raises(ValidationError):
        pivotal_interval(1.0, reps, 1.0)


def test_pivotal_ignores_replicate_order():
    rng = np.random.default_rng(70)
    reps = rng.normal(size=200)
    assert pivotal_interval(0.3, reps, 0.95) == pivotal_interval(0.3, rng.permutation(reps), 0.95)


def test_degenerate_data_gives_zero_interval():
    y = np.tile([[0.0, 0.0, 1.0]], (20, 1))
    d = StratifiedDataset(Sphere2(), np.tile([0, 1], 10), np.ones(20, dtype=int), y)
    ci = bootstrap_pivotal_ci(d, 2, B=100, rng=np.random.default_rng(0))
    assert (ci.lower, ci.upper, ci.point) == (0.0, 0.0, 0.0)


def test_bootstrap_is_deterministic_and_ordered():
    d = generate_scenario(ScenarioConfig(2, 64), np.random.default_rng(71))
    a = bootstrap_pivotal_ci(d, 2, B=100, rng=np.random.default_rng(5))
    b = bootstrap_pivotal_ci(d, 2, B=100, rng=np.random.default_rng(5))
    assert (a.lower, a.upper) == (b.lower, b.upper)
    assert 0.0 <= a.lower <= a.upper
    assert a.point == estimate_t_alpha(d, 2).value
    with pytest.raises(ValidationError):
        bootstrap_pivotal_ci(d, 2, B=50)


def test_bootstrap_counts_redraws_for_tiny_cells():
    rng = np.random.default_rng(72)
    z = np.array([1, 0, 1, 0, 1, 1, 0, 0, 1, 0])
    s = np.array([1, 1, 2, 2, 2, 2, 2, 2, 2, 2])
    y = rng.normal(size=(10, 1))
    d = StratifiedDataset(Euclidean(1), z, s, y)
    ci = bootstrap_pivotal_ci(d, 2, B=100, rng=rng)
    assert ci.redraws > 0


def test_interval_width_shrinks_with_n():
    widths = {}
    for n in (128, 512):
        w = []
        for rep in range(50):
            d = generate_scenario(ScenarioConfig(2, n), np.random.default_rng([73, n, rep]))
            ci = bootstrap_pivotal_ci(d, 2, B=100, rng=np.random.default_rng([74, n, rep]))
            w.append(ci.upper - ci.lower)
        widths[n] = np.median(w)
    assert widths[512] < widths[128]


def test_permutation_preserves_stratum_counts():
    rng = np.random.default_rng(75)
    z = rng.integers(0, 2, 60)
    s = rng.integers(1, 4, 60)
    s[0] = 4  # a single-unit stratum stays fixed
    out = permute_within_strata(z, s, rng)
    for label in range(1, 5):
        assert out[s == label].sum() == z[s == label].sum()
    assert out[0] == z[0]


def test_p_value_add_one_when_observed_is_extreme():
    # one stratum of two units: the observed split is the largest separation
    y = np.array([[0.0], [10.0]] + [[5.0]] * 0)
    z = np.array([0, 1])
    s = np.array([1, 1])
    d = StratifiedDataset(Euclidean(1), z, s, y)
    res = randomization_test(d, 2, n_perm=999, rng=np.random.default_rng(0))
    # swapping the two units gives the same distance, so every permutation ties
    assert res.p_value == 1.0

    # many strata: only the observed assignment reaches the observed statistic, up to chance
    rng = np.random.default_rng(1)
    n = 40
    z = np.tile([0, 1], n // 2)
    s = np.repeat(np.arange(1, n // 2 + 1), 2)
    y = (10.0 * z + rng.normal(scale=0.01, size=n))[:, None]
    d = StratifiedDataset(Euclidean(1), z, s, y)
    res = randomization_test(d, 2, n_perm=999, rng=np.random.default_rng(2))
    assert res.exceedances == 0
    assert res.p_value == pytest.approx(1 / 1000)


def test_identical_groups_give_zero_and_p_one():
    y = np.tile([[0.0, 0.0, 1.0]], (20, 1))
    d = StratifiedDataset(Sphere2(), np.tile([0, 1], 10), np.ones(20, dtype=int), y)
    res = randomization_test(d, 1, n_perm=50, rng=np.random.default_rng(0))
    assert res.statistic == 0.0 and res.p_value == 1.0


def test_strong_effect_is_detected():
    d = generate_scenario(ScenarioConfig(1, 128, (np.pi / 16) ** 2), np.random.default_rng(76))
    res = randomization_test(d, 2, n_perm=199, rng=np.random.default_rng(77))
    assert res.p_value <= 0.01


def test_randomization_is_deterministic():
    d = generate_scenario(ScenarioConfig(1, 32), np.random.default_rng(78))
    a = randomization_test(d, 1, n_perm=50, rng=np.random.default_rng(3))
    b = randomization_test(d, 1, n_perm=50, rng=np.random.default_rng(3))
    assert a.p_value == b.p_value
    with pytest.raises(ValidationError):
        randomization_test(d, 1, n_perm=0)
