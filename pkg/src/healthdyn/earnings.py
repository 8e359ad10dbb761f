"""Hourly-wage process: health/age profile plus persistent and measurement-error terms.

``log e = omega(h, age) + theta + upsilon`` where ``theta`` is an AR(1) and
``upsilon`` is pure measurement error. ``omega`` is quadratic in age and
piecewise linear in health with non-negative slopes, so offers never fall
as health improves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import optimize

from .errors import IdentificationError
from .health_dynamics.canonical import fit_min_distance, empirical_moments
from .io import parse_float_list, read_keyed, write_keyed
from .markov import rouwenhorst

#: Stochastic-part estimates (biennial) used as generator defaults.
WAGE_DEFAULTS = dict(rho=0.896, sigma2_nu=0.034, sigma2_ups=0.226, sigma2_0=0.148)
DEFAULT_KNOTS = (-0.633, -0.170, 0.340)
RETIREMENT_AGE = 70


def health_basis(h, knots) -> np.ndarray:
    """Piecewise-linear basis (..., 4) that vanishes at the last knot."""
    k1, k2, k3 = knots
    h = np.asarray(h, float)
    return np.stack([np.minimum(h, k1) - k1,
                     np.clip(h, k1, k2) - k2,
                     np.clip(h, k2, k3) - k3,
                     np.maximum(h, k3) - k3], axis=-1)


@dataclass(frozen=True)
class EarningsProcess:
    """Deterministic profile plus AR(1) persistent component.

    ``age_coef`` multiplies ``(1, age - 50, (age - 50)**2)``; ``h_slopes``
    multiply :func:`health_basis`. ``period`` is the number of years per
    step of the stochastic parameters (2 for survey-wave estimates).
    """

    age_coef: tuple = (2.0, 0.004, -0.0009)
    h_slopes: tuple = (0.12, 0.08, 0.06, 0.04)
    knots: tuple = DEFAULT_KNOTS
    rho: float = WAGE_DEFAULTS["rho"]
    sigma2_nu: float = WAGE_DEFAULTS["sigma2_nu"]
    sigma2_ups: float = WAGE_DEFAULTS["sigma2_ups"]
    sigma2_0: float = WAGE_DEFAULTS["sigma2_0"]
    n_theta: int = 5
    period: int = 2

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        for name in ("sigma2_nu", "sigma2_ups", "sigma2_0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if any(s < 0 for s in self.h_slopes):
            raise ValueError("health slopes must be non-negative")
        if not (self.knots[0] < self.knots[1] < self.knots[2]):
            raise ValueError("knots must be strictly increasing")

    def omega(self, h, age):
        a = np.asarray(age, float) - 50.0
        b0, b1, b2 = self.age_coef
        return b0 + b1 * a + b2 * a**2 + health_basis(h, self.knots) @ np.asarray(self.h_slopes, float)

    def wage_offer(self, h, age, theta=0.0):
        """Hourly offer ``exp(omega + theta)``; zero from the retirement age on."""
        age = np.asarray(age, float)
        w = np.exp(self.omega(h, age) + np.asarray(theta, float))
        return np.where(age >= RETIREMENT_AGE, 0.0, w)

    def to_annual(self) -> "EarningsProcess":
        """Annual-step parameters implying the same two-year law.

        ``rho_a**2 = rho`` and ``sigma2_a * (1 + rho_a**2) = sigma2``.
        """
        if self.period == 1:
            return self
        if self.rho < 0:
            raise ValueError("a negative biennial persistence has no real annual root")
        rho_a = float(np.sqrt(self.rho))
        return replace(self, rho=rho_a, sigma2_nu=self.sigma2_nu / (1.0 + rho_a**2), period=1)

    def theta_chain(self):
        """Discrete ``theta`` chain ``(grid, trans, init)`` at this process's step."""
        return rouwenhorst(self.rho, self.sigma2_nu, self.n_theta, init_var=self.sigma2_0)

    def save(self, path) -> None:
        d = asdict(self)
        write_keyed(path, "earn_v1", d)

    @classmethod
    def load(cls, path) -> "EarningsProcess":
        raw = read_keyed(path, "earn_v1")
        return cls(age_coef=tuple(parse_float_list(raw["age_coef"])),
                   h_slopes=tuple(parse_float_list(raw["h_slopes"])),
                   knots=tuple(parse_float_list(raw["knots"])),
                   rho=float(raw["rho"]), sigma2_nu=float(raw["sigma2_nu"]),
                   sigma2_ups=float(raw["sigma2_ups"]), sigma2_0=float(raw["sigma2_0"]),
                   n_theta=int(raw["n_theta"]), period=int(raw["period"]))


def wage_offer(process: EarningsProcess, h, age, theta=0.0):
    return process.wage_offer(h, age, theta)


@dataclass
class EarningsFit:
    process: EarningsProcess
    moments: pd.DataFrame
    objective: float
    n_obs: int
    residuals: pd.DataFrame = field(repr=False, default=None)


def estimate_earnings_process(panel, health="h", knots=None, lags=(1, 2, 3, 4),
                              min_age: int = 50, max_age: int = RETIREMENT_AGE - 1) -> EarningsFit:
    """Two-step estimate: constrained least squares, then minimum distance.

    Parameters
    ----------
    panel : DataFrame or object with ``.data``
        Needs ``person_id``, ``age`` and ``hourly_wage`` (missing when not
        working) plus the health measure.
    health : str or array
        Column name or values aligned with the panel rows.
    knots : three health values, optional
        Defaults to the 20/30/50th percentiles of health in the sample.
    """
    df = getattr(panel, "data", panel)
    h = df[health].to_numpy(float) if isinstance(health, str) else np.asarray(health, float)
    df = df.assign(_h=h)
    use = df[df["hourly_wage"].notna() & (df["hourly_wage"] > 0) & df["_h"].notna()
             & (df["age"] >= min_age) & (df["age"] <= max_age)]
    periods = ((use["age"] - 50) // 2).astype(int)
    if periods.nunique() < 3:
        raise IdentificationError("wages must be observed in at least three waves")
    if knots is None:
        knots = tuple(float(v) for v in np.quantile(use["_h"], [0.2, 0.3, 0.5]))
    y = np.log(use["hourly_wage"].to_numpy(float))
    a = use["age"].to_numpy(float) - 50.0
    X = np.column_stack([np.ones_like(a), a, a**2, health_basis(use["_h"].to_numpy(), knots)])
    lo = np.r_[-np.inf, -np.inf, -np.inf, np.zeros(4)]
    scale = np.maximum(np.abs(X).max(axis=0), 1e-12)
    res = optimize.lsq_linear(X / scale, y, bounds=(lo, np.full(7, np.inf)), method="bvls",
                              tol=1e-14, lsmr_tol=None)
    coef = res.x / scale
    resid = y - X @ coef
    rp = pd.DataFrame({"person_id": use["person_id"].to_numpy(), "period": periods.to_numpy(),
                       "h": resid})
    emp = empirical_moments(rp, lags=lags)
    fit = fit_min_distance(emp, denominator="standard")
    p = fit.params
    proc = EarningsProcess(age_coef=tuple(float(c) for c in coef[:3]),
                           h_slopes=tuple(float(max(c, 0.0)) for c in coef[3:]),
                           knots=tuple(knots), rho=p.rho, sigma2_nu=p.sigma2_nu,
                           sigma2_ups=p.sigma2_eps, sigma2_0=p.sigma2_0, period=2)
    return EarningsFit(proc, fit.moments, fit.objective, int(len(use)), rp)


@dataclass
class WagePaths:
    ages: np.ndarray
    theta_index: np.ndarray
    theta: np.ndarray
    wages: np.ndarray


def simulate_earnings(process: EarningsProcess, health_paths, ages, seed: int = 0,
                      annual: bool = True) -> WagePaths:
    """Wage-offer paths on the discrete ``theta`` chain.

    ``health_paths`` is (n, n_ages) aligned with ``ages``; one row per person.
    With ``annual`` the chain uses the annual-step parameters.
    """
    proc = process.to_annual() if annual else process
    grid, trans, init = proc.theta_chain()
    health_paths = np.atleast_2d(np.asarray(health_paths, float))
    ages = np.asarray(ages)
    n, T = health_paths.shape
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(n, T))
    idx = np.empty((n, T), dtype=np.int64)
    idx[:, 0] = np.minimum(np.searchsorted(np.cumsum(init), u[:, 0], side="right"), grid.size - 1)
    cum = np.cumsum(trans, axis=1)
    cum[:, -1] = 1.0
    for t in range(1, T):
        idx[:, t] = np.minimum((u[:, t, None] >= cum[idx[:, t - 1]]).sum(axis=1), grid.size - 1)
    theta = grid[idx]
    return WagePaths(ages, idx, theta, proc.wage_offer(health_paths, ages[None, :], theta))


def simulate_wage_panel(process: EarningsProcess, n_persons: int, n_waves: int = 5, seed: int = 0,
                        health_sd: float = 0.7, first_ages=(50, 60)) -> pd.DataFrame:
    """Biennial wage panel drawn from ``process`` with every offer observed.

    Health is iid normal, so the deterministic part is identified without
    selection into work. Columns match what the estimator expects.
    """
    r = np.random.default_rng(seed)
    ages = r.integers(*first_ages, n_persons)[:, None] + 2 * np.arange(n_waves)[None, :]
    h = r.normal(0.0, health_sd, (n_persons, n_waves))
    theta = np.empty((n_persons, n_waves))
    theta[:, 0] = r.normal(0.0, np.sqrt(process.sigma2_0), n_persons)
    for t in range(1, n_waves):
        theta[:, t] = process.rho * theta[:, t - 1] + r.normal(0.0, np.sqrt(process.sigma2_nu), n_persons)
    ups = r.normal(0.0, np.sqrt(process.sigma2_ups), (n_persons, n_waves))
    w = np.exp(process.omega(h, ages) + theta + ups)
    return pd.DataFrame({"person_id": np.repeat(np.arange(n_persons), n_waves), "age": ages.ravel(),
                         "hourly_wage": w.ravel(), "h": h.ravel()})
