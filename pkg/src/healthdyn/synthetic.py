"""Model instances built from known-truth generators.

These stand in for primitives estimated from survey data: a health chain
discretized from a kinked-persistence (nonlinear) or AR(1) (canonical)
generator, a Gompertz life table split into health groups, and the default
earnings process. Health levels carry an age drift so that pooled
percentiles sit near the time-cost knots.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .earnings import EarningsProcess
from .health_dynamics.canonical import CanonicalParams
from .health_dynamics.discrete import DiscreteHealthProcess, annualize, discretize
from .health_dynamics.quantile import KinkedQuantileProcess, simulate_generator
from .lifecycle.inputs import ModelInputs
from .lifecycle.params import ModelParams, StateGrid
from .mortality import (MortalityTable, default_lifetable, health_cutoffs, rescale_to_lifetable,
                        weighted_quantiles)

MORTALITY_MULTIPLIERS = (2.0, 1.4, 1.2, 1.0)


def health_generator(variant: str):
    if variant == "nonlinear":
        return KinkedQuantileProcess()
    if variant == "canonical":
        return CanonicalParams.defaults()
    raise ValueError("variant must be 'nonlinear' or 'canonical'")


def synthetic_health(variant: str = "nonlinear", n_eta: int | None = None, n_eps: int = 5,
                     n_paths: int = 60_000, seed: int = 0, level: float = 0.55,
                     age_slope: float = -0.025, first_age: int = 50, last_age: int = 85,
                     return_range: bool = False):
    """Annual discrete health chain on ``first_age..last_age``.

    Persistent paths are drawn biennially, binned, and annualized; the
    offsets add ``level + age_slope * (age - first_age)``. With
    ``return_range`` also returns the (min, max) of the simulated
    continuous health sample, which lies outside the grid's nodes.
    """
    n_eta = (24 if variant == "canonical" else 19) if n_eta is None else n_eta
    if (last_age - first_age) % 2 != 1:
        raise ValueError("the age span must cover whole two-year blocks")
    n_bi = (last_age - first_age + 1) // 2
    gen = health_generator(variant)
    paths = simulate_generator(gen, n_paths, n_bi, seed=seed)
    bi_ages = np.arange(first_age, last_age, 2)
    proc = discretize(paths, gen.transitory_variance, n_eta=n_eta, n_eps=n_eps, ages=bi_ages)
    proc = annualize(proc)
    proc.offsets = level + age_slope * (proc.ages - first_age)
    if not return_range:
        return proc
    rng = np.random.default_rng([seed, 7])
    drift = level + age_slope * (bi_ages - first_age)
    sample = paths + drift + rng.normal(0.0, np.sqrt(gen.transitory_variance), paths.shape)
    return proc, (float(sample.min()), float(sample.max()))


def synthetic_mortality(process: DiscreteHealthProcess, lifetable=None,
                        multipliers=MORTALITY_MULTIPLIERS) -> MortalityTable:
    """Group rates proportional to ``multipliers``, rescaled to a Gompertz life table."""
    ages = process.ages
    lifetable = default_lifetable(ages) if lifetable is None else lifetable
    raw = np.tile(np.asarray(multipliers, float), (ages.size, 1)) * 0.01
    return rescale_to_lifetable(raw, lifetable, ages=ages, cutoffs=health_cutoffs(process))


def health_range(process: DiscreteHealthProcess) -> tuple[float, float]:
    levels = np.stack([process.levels(k) for k in range(process.ages.size)])
    return float(levels.min()), float(levels.max())


def pooled_health_quantiles(process: DiscreteHealthProcess, mortality=None, probs=(0.2, 0.3, 0.5)) -> np.ndarray:
    """Quantiles of health pooled over ages, weighting each age by survivor mass."""
    death = getattr(mortality, "death_prob", mortality)
    mass = process.init.astype(float).copy()
    levels, weights = [], []
    for k, age in enumerate(process.ages):
        lv = process.levels(k)
        joint = mass[:, None] * process.eps_weights[k][None, :]
        levels.append(lv.ravel())
        weights.append(joint.ravel())
        if k < process.trans.shape[0]:
            q = np.zeros_like(lv) if death is None else death(int(age), lv)
            mass = (joint * (1.0 - q)).sum(axis=1) @ process.trans[k]
    return weighted_quantiles(np.concatenate(levels), np.concatenate(weights), probs)


def params_for(process: DiscreteHealthProcess, variant: str = "nonlinear", mortality=None,
               sample_range=None, **overrides) -> ModelParams:
    """Estimated-column parameters with spline knots placed on this process.

    Interior knots sit at the pooled 20/30/50th health percentiles. The
    outer knots sit at ``sample_range`` (the extremes of the continuous
    health sample) widened if needed to cover every grid level.
    """
    lo, hi = health_range(process)
    if sample_range is not None:
        lo, hi = min(lo, sample_range[0]), max(hi, sample_range[1])
    inner = tuple(float(v) for v in pooled_health_quantiles(process, mortality))
    base = ModelParams.defaults(variant)
    knots = (min(lo, inner[0] - 1e-3),) + inner + (max(hi, inner[2] + 1e-3),)
    return replace(base, h_knots=knots, **overrides)


def reduced_grid(variant: str = "nonlinear", **kw) -> StateGrid:
    """Coarse grid for estimation experiments and tests."""
    base = dict(n_assets=16, a_max=1_000_000.0, n_pension=3, p_max=150_000.0, n_theta=3,
                n_eta=9, n_eps=3)
    base.update(kw)
    return StateGrid(**base)


def synthetic_inputs(variant: str = "nonlinear", grid: StateGrid | None = None, seed: int = 0,
                     n_paths: int = 60_000, earnings: EarningsProcess | None = None,
                     mortality: bool = True, **param_overrides) -> ModelInputs:
    """Full model instance on synthetic primitives shaped like the survey estimates."""
    grid = StateGrid.for_variant(variant) if grid is None else grid
    proc, rng = synthetic_health(variant, n_eta=grid.n_eta, n_eps=grid.n_eps, n_paths=n_paths, seed=seed,
                                 first_age=grid.first_age, last_age=grid.last_age, return_range=True)
    mort = synthetic_mortality(proc) if mortality else None
    params = params_for(proc, variant, mort, sample_range=rng, **param_overrides)
    return ModelInputs(params=params, health=proc, earnings=earnings or EarningsProcess(),
                       mortality=mort, grid=grid)
