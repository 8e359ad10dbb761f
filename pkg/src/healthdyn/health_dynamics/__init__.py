"""Health residual dynamics: canonical and quantile processes, discretization."""

from .canonical import (CanonicalFit, CanonicalParams, canonical_moments, empirical_moments,
                        estimate_canonical, fit_min_distance, simulate_canonical)
from .discrete import (DiscreteHealthProcess, annualize, discretize, gaussian_nodes,
                       mortality_bias_correction, survivor_medians, weighted_median)
from .quantile import (DEFAULT_TAUS, KinkedQuantileProcess, QuantileTable, ar1_table,
                       estimate_quantile_table, persistence, simulate_generator,
                       simulate_nonlinear)
from .shocks import shock_moments

__all__ = [
    "CanonicalFit", "CanonicalParams", "canonical_moments", "empirical_moments",
    "estimate_canonical", "fit_min_distance", "simulate_canonical",
    "DiscreteHealthProcess", "annualize", "discretize", "gaussian_nodes",
    "mortality_bias_correction", "survivor_medians", "weighted_median",
    "DEFAULT_TAUS", "KinkedQuantileProcess", "QuantileTable", "ar1_table",
    "estimate_quantile_table", "persistence", "simulate_generator", "simulate_nonlinear",
    "shock_moments",
]
