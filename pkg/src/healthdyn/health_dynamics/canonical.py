"""Canonical AR(1)-plus-noise representation of health residual dynamics.

One period is one survey wave (two years). ``t`` counts waves since the
initial age, so ``t = 0`` is the age-50 cross-section.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize

from ..errors import IdentificationError, NumericalError

#: Survey-scale point estimates (biennial).
HEALTH_DEFAULTS = dict(rho=0.953, sigma2_nu=0.084, sigma2_eps=0.137, sigma2_0=0.450)

#: Denominator of the geometric sum in the variance formulas.
#: ``"printed"`` uses (1 + rho**2) as displayed in the appendix,
#: ``"standard"`` uses (1 - rho**2), the textbook AR(1) algebra.
DENOMINATORS = ("printed", "standard")


@dataclass(frozen=True)
class CanonicalParams:
    rho: float
    sigma2_nu: float
    sigma2_eps: float
    sigma2_0: float

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        for name in ("sigma2_nu", "sigma2_eps", "sigma2_0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def defaults(cls) -> "CanonicalParams":
        return cls(**HEALTH_DEFAULTS)

    def as_dict(self) -> dict[str, float]:
        return dict(rho=self.rho, sigma2_nu=self.sigma2_nu,
                    sigma2_eps=self.sigma2_eps, sigma2_0=self.sigma2_0)

    # generator interface shared with KinkedQuantileProcess
    def draw_initial(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(0.0, np.sqrt(self.sigma2_0), n)

    def quantile(self, eta, tau):
        """Conditional ``tau`` quantile of next-period eta."""
        from scipy.stats import norm

        return self.rho * np.asarray(eta, float) + np.sqrt(self.sigma2_nu) * norm.ppf(tau)

    def step(self, eta: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.quantile(eta, u)

    @property
    def transitory_variance(self) -> float:
        return self.sigma2_eps


def _persistent_var(rho, s2_nu, s2_0, t, denominator):
    t = np.asarray(t, dtype=float)
    r2t = rho ** (2 * t)
    denom = 1.0 + rho**2 if denominator == "printed" else 1.0 - rho**2
    if denom == 0:
        geo = t * s2_nu
    else:
        geo = (1.0 - r2t) / denom * s2_nu
    return r2t * s2_0 + geo


def moment_index(n_periods: int, lags) -> list[tuple[int, int]]:
    """(t, lag) pairs in canonical order: variances first, then covariances."""
    lags = sorted(set(int(l) for l in lags))
    pairs = [(t, 0) for t in range(n_periods)]
    for lag in lags:
        pairs += [(t, lag) for t in range(lag, n_periods)]
    return pairs


def canonical_moments(params: CanonicalParams, n_periods: int, lags=(1, 2, 3, 4),
                      denominator: str = "printed") -> pd.DataFrame:
    """Theoretical Var(h_t) and E(h_t h_{t-lag}) of the canonical process.

    ``lags`` are in waves (one wave = two years, so lags 1..4 are the 2..8
    year lags). Returns a frame with columns ``t, lag, value``.
    """
    if not abs(params.rho) < 1:
        raise ValueError("|rho| must be < 1")
    if denominator not in DENOMINATORS:
        raise ValueError(f"denominator must be one of {DENOMINATORS}")
    if any(int(l) < 1 for l in lags):
        raise ValueError("lags must be positive multiples of the wave spacing")
    rows = []
    p = params
    for t, lag in moment_index(n_periods, lags):
        if lag == 0:
            val = _persistent_var(p.rho, p.sigma2_nu, p.sigma2_0, t, denominator) + p.sigma2_eps
        else:
            val = p.rho**lag * _persistent_var(p.rho, p.sigma2_nu, p.sigma2_0, t - lag, denominator)
        rows.append((t, lag, float(val)))
    return pd.DataFrame(rows, columns=["t", "lag", "value"])


def simulate_canonical(params: CanonicalParams, n_persons: int, n_periods: int,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``(h, eta)`` arrays of shape (n_persons, n_periods)."""
    rng = np.random.default_rng(seed)
    eta = np.empty((n_persons, n_periods))
    eta[:, 0] = rng.normal(0.0, np.sqrt(params.sigma2_0), n_persons)
    sd_nu = np.sqrt(params.sigma2_nu)
    for t in range(1, n_periods):
        eta[:, t] = params.rho * eta[:, t - 1] + rng.normal(0.0, sd_nu, n_persons)
    h = eta + rng.normal(0.0, np.sqrt(params.sigma2_eps), (n_persons, n_periods))
    return h, eta


def paths_to_panel(h: np.ndarray) -> pd.DataFrame:
    n, T = h.shape
    return pd.DataFrame({
        "person_id": np.repeat(np.arange(n), T),
        "period": np.tile(np.arange(T), n),
        "h": h.ravel(),
    })


def empirical_moments(residual_panel: pd.DataFrame, lags=(1, 2, 3, 4),
                      value_col: str = "h") -> pd.DataFrame:
    """Sample analogues of the canonical moments.

    ``residual_panel`` needs ``person_id``, ``period`` and ``value_col``.
    Second moments are raw (not demeaned) products, matching the
    zero-mean residual assumption.
    """
    df = residual_panel[["person_id", "period", value_col]].dropna()
    wide = df.pivot_table(index="person_id", columns="period", values=value_col, aggfunc="first")
    periods = sorted(int(c) for c in wide.columns)
    n_periods = max(periods) + 1 if periods else 0
    rows = []
    for t, lag in moment_index(n_periods, lags):
        if t not in wide.columns or (t - lag) not in wide.columns:
            continue
        prod = (wide[t] * wide[t - lag]).dropna()
        if len(prod) == 0:
            continue
        rows.append((t, lag, float(prod.mean()), int(len(prod))))
    return pd.DataFrame(rows, columns=["t", "lag", "value", "n"])


@dataclass
class CanonicalFit:
    params: CanonicalParams
    moments: pd.DataFrame
    objective: float
    success: bool
    message: str = ""
    trace: list = field(default_factory=list)


def fit_min_distance(emp: pd.DataFrame, weights=None, denominator: str = "standard",
                     start: CanonicalParams | None = None) -> CanonicalFit:
    """Equally weighted minimum-distance fit of the four canonical parameters."""
    t = emp["t"].to_numpy()
    lag = emp["lag"].to_numpy()
    target = emp["value"].to_numpy()
    w = np.ones_like(target) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    trace = []

    def model(x):
        rho, s_nu, s_eps, s_0 = x
        base = _persistent_var(rho, s_nu, s_0, t - lag, denominator)
        return np.where(lag == 0, base + s_eps, rho**lag * base)

    def resid(x):
        r = sw * (model(x) - target)
        trace.append((*x, float(r @ r)))
        return r

    var0 = float(target[(t == 0) & (lag == 0)].mean()) if np.any((t == 0) & (lag == 0)) else float(target[lag == 0].mean())
    cov1 = emp[emp["lag"] == 1]
    if start is None:
        rho0 = 0.8
        if len(cov1):
            v = emp[emp["lag"] == 0].set_index("t")["value"]
            ratios = [c / v.get(tt - 1, np.nan) for tt, c in zip(cov1["t"], cov1["value"])]
            ratios = [r for r in ratios if np.isfinite(r)]
            if ratios:
                rho0 = float(np.clip(np.median(ratios), -0.9, 0.95))
        x0s = [np.array([rho0, 0.1 * var0, 0.25 * var0, 0.7 * var0]),
               np.array([0.5, 0.3 * var0, 0.3 * var0, 0.5 * var0])]
    else:
        x0s = [np.array([start.rho, start.sigma2_nu, start.sigma2_eps, start.sigma2_0])]
    lo = np.array([-0.999, 0.0, 0.0, 0.0])
    hi = np.array([0.999, np.inf, np.inf, np.inf])
    best = None
    for x0 in x0s:
        x0 = np.clip(x0, lo + 1e-9, np.where(np.isfinite(hi), hi - 1e-9, x0 + 1))
        res = optimize.least_squares(resid, x0, bounds=(lo, hi), xtol=1e-14, ftol=1e-14,
                                     gtol=1e-14, max_nfev=5000)
        if best is None or res.cost < best.cost:
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        raise NumericalError(f"minimum-distance fit failed; last trace rows: {trace[-3:]}")
    rho, s_nu, s_eps, s_0 = best.x
    params = CanonicalParams(float(rho), float(s_nu), float(s_eps), float(s_0))
    fitted = emp.copy()
    fitted["fitted"] = model(best.x)
    return CanonicalFit(params, fitted, float(2 * best.cost), bool(best.success), best.message, trace)


def estimate_canonical(residual_panel: pd.DataFrame, lags=(1, 2, 3, 4), weights=None,
                       denominator: str = "standard", value_col: str = "h") -> CanonicalFit:
    """Fit rho, sigma2_nu, sigma2_eps, sigma2_0 to residual second moments.

    ``residual_panel`` has one row per person-wave with ``person_id``,
    ``period`` (waves since the initial age) and the residual column.
    """
    n_periods = residual_panel["period"].nunique()
    if n_periods < 3:
        raise IdentificationError(
            f"canonical process needs at least three periods of data, got {n_periods}")
    emp = empirical_moments(residual_panel, lags=lags, value_col=value_col)
    if len(emp) < 4:
        raise IdentificationError("fewer than four usable moments")
    return fit_min_distance(emp, weights=weights, denominator=denominator)
