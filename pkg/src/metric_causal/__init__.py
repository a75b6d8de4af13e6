"""Absolute average and median treatment effects for outcomes on manifolds."""
from ._backend import BACKEND
from .errors import (CutLocusError, DomainError, EmptyCellError, EstimationError, IngestionError,
                     MatchingError, MetricCausalError, SeparationError, ValidationError)
from .estimands import (EffectEstimate, StratifiedDataset, Unit, empirical_lambda, estimate_t_alpha,
                        naive_nested_estimator)
from .frechet import SolverOptions, SolverResult, WeightedSample, solve, weighted_l_alpha_estimator
from .geometry import (Euclidean, Hyperbolic2, KendallShape, ManifoldPoint, Sphere2, TangentVector, distance,
                       exp_map, kendall_preshape, log_map, parallel_transport)
from .inference import IntervalEstimate, TestResult, bootstrap_pivotal_ci, randomization_test
from .matching import estimate_propensity, full_match_caliper, rank_mahalanobis, stratify_by_matching
from .regression import GeodesicFit, geodesic_regression_fit, theorem1_check
from .sampling import ScenarioConfig, generate_scenario, sample_riemannian_normal

__version__ = "0.1.0"
