"""Replicate fan-out for the simulation studies.

Replicate ``l`` of a cell draws all of its randomness from
``SeedSequence([seed, scenario, N, l])``, so results do not depend on how replicates
are spread over workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import EmptyCellError, MatchingError, SeparationError
from .estimands import estimate_t_alpha, naive_nested_estimator
from .frechet import DEFAULT_OPTIONS, SolverOptions
from .inference import bootstrap_pivotal_ci, randomization_test
from .matching import DEFAULT_CALIPER, stratify_by_matching
from .sampling import TRUE_EFFECT, ScenarioConfig, example1_dataset, generate_scenario

THREADS_ENV = "METRIC_CAUSAL_THREADS"
MAX_RESAMPLES = 1000


def worker_count():
    """Worker processes to use: ``$METRIC_CAUSAL_THREADS`` if set, else the CPU count."""
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def replicate_rng(*keys):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def parallel_map(fn, tasks, workers=None):
    """``[fn(t) for t in tasks]``, spread over processes when more than one worker is allowed."""
    tasks = list(tasks)
    workers = min(workers or worker_count(), len(tasks)) if tasks else 1
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


@dataclass(frozen=True)
class SimulationTask:
    scenario: int
    n: int
    replicate: int
    seed: int
    sigma2: float
    alphas: tuple = (2, 1)
    bootstrap: int = 0
    level: float = 0.95
    caliper: float = DEFAULT_CALIPER
    lambda_policy: str | None = None
    permutations: int = 0
    sharp_null: bool = False
    solver: dict = field(default_factory=dict)


def _draw_dataset(task, rng):
    """Draw one analysable dataset, redrawing whole replicates on empty cells."""
    config = ScenarioConfig(task.scenario, task.n, task.sigma2, task.lambda_policy)
    for resamples in range(MAX_RESAMPLES):
        try:
            raw = generate_scenario(config, rng, impose_sharp_null=task.sharp_null)
            if config.randomized:
                return raw, raw, resamples
            matched, _ = stratify_by_matching(raw, task.caliper)
            return raw, matched, resamples
        except (EmptyCellError, MatchingError, SeparationError):
            continue
    raise EmptyCellError(0, "treated or control")


def _rematch(data, caliper):
    return stratify_by_matching(data, caliper)[0]


def run_simulation_replicate(task: SimulationTask) -> dict:
    """Estimates (and intervals for designs 2 and 4) for one replicate."""
    rng = replicate_rng(task.seed, task.scenario, task.n, task.replicate)
    opts = SolverOptions(**task.solver) if task.solver else DEFAULT_OPTIONS
    raw, data, resamples = _draw_dataset(task, rng)
    out = {"replicate": task.replicate, "resamples": resamples, "n_analysed": len(data),
           "solver_failures": 0, "estimates": {}, "intervals": {}, "p_values": {}}
    for alpha in task.alphas:
        est = estimate_t_alpha(data, alpha, opts)
        out["solver_failures"] += not est.converged
        out["estimates"][alpha] = est.value
        if task.bootstrap:
            rematch = None if task.scenario in (1, 2) else partial(_rematch, caliper=task.caliper)
            ci = bootstrap_pivotal_ci(raw if rematch else data, alpha, task.bootstrap, task.level,
                                      rematch=rematch, rng=rng, opts=opts)
            out["solver_failures"] += ci.solver_failures
            out["intervals"][alpha] = {"lower": ci.lower, "upper": ci.upper, "redraws": ci.redraws,
                                       "covered": bool(ci.covers(TRUE_EFFECT))}
        if task.permutations:
            test = randomization_test(data, alpha, task.permutations, rng, opts)
            out["p_values"][alpha] = test.p_value
    return out


def summarize_cell(results, alpha, metric):
    """Mean and standard error over replicates.

    ``metric="mae"`` averages ``|T - 2|``; ``metric="coverage"`` averages the
    indicator that the interval contains 2.
    """
    if metric == "mae":
        vals = np.array([abs(r["estimates"][alpha] - TRUE_EFFECT) for r in results])
    else:
        vals = np.array([float(r["intervals"][alpha]["covered"]) for r in results])
    R = len(vals)
    mean = float(vals.mean())
    sd = float(vals.std(ddof=1)) if R > 1 else 0.0
    return {"estimate": mean, "standard_error": sd / np.sqrt(R), "sd": sd, "replicates": R}


def run_simulation_cell(scenario, n, replicates, seed, sigma2, alphas=(2, 1), bootstrap=0, level=0.95,
                        caliper=DEFAULT_CALIPER, lambda_policy=None, solver=None, workers=None):
    """All replicates of one (design, N) cell, in replicate order."""
    tasks = [SimulationTask(scenario, n, l, seed, sigma2, tuple(alphas), bootstrap, level, caliper,
                            lambda_policy, 0, False, dict(solver or {})) for l in range(replicates)]
    return parallel_map(run_simulation_replicate, tasks, workers)


@dataclass(frozen=True)
class Example1Task:
    c: float
    n: int
    replicate: int
    seed: int
    alpha: int = 2


def run_example1_replicate(task: Example1Task) -> dict:
    rng = replicate_rng(task.seed, task.replicate)
    data = example1_dataset(task.c, task.n, rng)
    t = estimate_t_alpha(data, task.alpha)
    naive = naive_nested_estimator(data, task.alpha)
    return {"replicate": task.replicate, "t_alpha": t.value, "naive": naive.value,
            "converged": bool(t.converged and naive.converged)}
