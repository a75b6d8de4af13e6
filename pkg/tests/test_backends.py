import numpy as np
import pytest

from metric_causal import _backend
from metric_causal.frechet import DEFAULT_OPTIONS, solve
from metric_causal.geometry import Euclidean, Hyperbolic2, Sphere2
from oracles import cloud

pytestmark = pytest.mark.skipif(_backend.BACKEND != "cython", reason="compiled kernels not built")


@pytest.mark.parametrize("alpha", [2, 1])
@pytest.mark.parametrize("m", [Euclidean(2), Euclidean(5), Sphere2(), Hyperbolic2()],
                         ids=["euclidean2", "euclidean5", "sphere2", "hyperbolic2"])
def test_compiled_and_python_solvers_agree(m, alpha):
    rng = np.random.default_rng(20)
    for _ in range(10):
        pts = cloud(m, rng, 25, spread=0.9)
        w = rng.uniform(size=25)
        w /= w.sum()
        a = solve(m, pts, w, alpha, DEFAULT_OPTIONS, backend="python")
        b = solve(m, pts, w, alpha, DEFAULT_OPTIONS, backend="cython")
        assert a.converged == b.converged
        assert np.max(np.abs(a.minimizer - b.minimizer)) < 1e-10
        assert a.objective_value == pytest.approx(b.objective_value, rel=1e-12)
        assert abs(a.iterations - b.iterations) <= 2


def test_best_data_point_agrees():
    rng = np.random.default_rng(21)
    m = Sphere2()
    pts = cloud(m, rng, 40)
    w = np.full(40, 1 / 40)
    for alpha in (1, 2):
        assert _backend.best_data_point(m, pts, w, alpha, "python") == _backend.best_data_point(m, pts, w, alpha,
                                                                                                  "cython")


def test_kendall_falls_back_to_python():
    from metric_causal.geometry import KendallShape

    assert not _backend._use_ext(KendallShape(5), None)
