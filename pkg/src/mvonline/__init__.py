"""Online mean-variance portfolio selection."""

from .core import Moments, MomentAccumulator, accumulate, min_eigenvalue, moments
from .errors import MVError
from .metrics import MetricsReport, MetricsTracker
from .solver import SolveOptions, SolveResult, brute_force_mv, kkt_residual, solve_mv
from .strategies import (
    AdaptiveAlphaState,
    BayesianStrategy,
    ConstantAlphaState,
    FixedStrategy,
    ObjectiveKind,
    adaptive_next,
    bayesian_next,
    constant_alpha_next,
)

__all__ = [
    "AdaptiveAlphaState", "BayesianStrategy", "ConstantAlphaState", "FixedStrategy",
    "MVError", "MetricsReport", "MetricsTracker", "MomentAccumulator", "Moments",
    "ObjectiveKind", "SolveOptions", "SolveResult", "accumulate", "adaptive_next",
    "bayesian_next", "brute_force_mv", "constant_alpha_next", "kkt_residual",
    "min_eigenvalue", "moments", "solve_mv",
]
