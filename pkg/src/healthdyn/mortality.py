"""Health- and age-specific death probabilities anchored to a life table.

Health groups are the four cells cut at the 20th, 30th and 50th percentiles
of the age-specific health distribution (group 0 is the worst).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import LoadError
from .io import write_frame

CUT_PERCENTILES = (0.2, 0.3, 0.5)
GROUP_SHARES = np.array([0.2, 0.1, 0.2, 0.5])


def biennial_to_annual(p_biennial):
    """Annual probability with ``(1 - p_annual)**2 = 1 - p_biennial``."""
    return 1.0 - np.sqrt(1.0 - np.asarray(p_biennial, float))


def default_lifetable(ages=range(50, 86), gompertz=(-10.3, 0.095)) -> pd.DataFrame:
    """Synthetic Gompertz table standing in for a national life table."""
    ages = np.asarray(list(ages))
    return pd.DataFrame({"age": ages, "annual_death_rate": np.exp(gompertz[0] + gompertz[1] * ages)})


def load_lifetable(path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{path}: file not found")
    df = pd.read_csv(path)
    if list(df.columns[:2]) != ["age", "annual_death_rate"]:
        raise LoadError(f"{path}: expected columns age, annual_death_rate")
    return df


def health_groups(h, cutoffs) -> np.ndarray:
    return np.searchsorted(np.asarray(cutoffs, float), np.asarray(h, float), side="right")


@dataclass
class RawRates:
    """Empirical rates per age band and health group."""

    table: pd.DataFrame  # band_lo, band_hi, group, n, deaths, p_biennial, p_annual, missing

    def annual_matrix(self, ages) -> np.ndarray:
        """(n_ages, 4) annual rates; NaN where the cell is empty."""
        out = np.full((len(ages), 4), np.nan)
        for _, r in self.table.iterrows():
            m = (np.asarray(ages) >= r.band_lo) & (np.asarray(ages) <= r.band_hi)
            out[m, int(r.group)] = r.p_annual
        return out


def estimate_mortality(panel, health="h", band_width: int = 5, max_age: int = 89) -> RawRates:
    """Two-year death frequencies by age band and health group, plus annual equivalents.

    Records from the last wave carry no survival information and are
    dropped. Group cutoffs are computed within each band.
    """
    df = getattr(panel, "data", panel)
    h = df[health].to_numpy(float) if isinstance(health, str) else np.asarray(health, float)
    d = pd.DataFrame({"age": df["age"].to_numpy(), "wave": df["wave"].to_numpy(), "h": h,
                      "dead": df["dead_by_next_wave"].to_numpy(bool)})
    d = d[(d["wave"] < d["wave"].max()) & np.isfinite(d["h"])]
    rows = []
    for lo in range(50, max_age + 1, band_width):
        hi = lo + band_width - 1
        b = d[(d["age"] >= lo) & (d["age"] <= hi)]
        if len(b) == 0:
            for g in range(4):
                rows.append((lo, hi, g, 0, 0, np.nan, np.nan, True))
            continue
        cut = np.quantile(b["h"], CUT_PERCENTILES)
        grp = health_groups(b["h"], cut)
        for g in range(4):
            m = grp == g
            n = int(m.sum())
            deaths = int(b["dead"].to_numpy()[m].sum())
            pb = deaths / n if n else np.nan
            rows.append((lo, hi, g, n, deaths, pb, biennial_to_annual(pb) if n else np.nan, n == 0))
    table = pd.DataFrame(rows, columns=["band_lo", "band_hi", "group", "n", "deaths",
                                       "p_biennial", "p_annual", "missing"])
    if table["missing"].any():
        warnings.warn(f"{int(table['missing'].sum())} empty mortality cells", stacklevel=2)
    return RawRates(table)


@dataclass
class MortalityTable:
    """Annual death probabilities ``rates[age, group]`` with level cutoffs per age."""

    ages: np.ndarray
    rates: np.ndarray
    cutoffs: np.ndarray
    lifetable: np.ndarray | None = None
    factors: np.ndarray | None = None
    clipped: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.ages = np.asarray(self.ages, int)
        self.rates = np.asarray(self.rates, float)
        self.cutoffs = np.atleast_2d(np.asarray(self.cutoffs, float))
        if self.cutoffs.shape[0] == 1 and self.ages.size > 1:
            self.cutoffs = np.repeat(self.cutoffs, self.ages.size, axis=0)
        if self.rates.shape != (self.ages.size, 4) or self.cutoffs.shape != (self.ages.size, 3):
            raise ValueError("rates must be (n_ages, 4) and cutoffs (n_ages, 3)")
        if np.any((self.rates < 0) | (self.rates > 1)):
            raise ValueError("death probabilities must lie in [0, 1]")

    def death_prob(self, age: int, h):
        """Annual death probability at a single ``age`` for health level(s) ``h``."""
        k = int(age) - int(self.ages[0])
        if k < 0 or k >= self.ages.size:
            raise KeyError(f"age {age} outside {self.ages[0]}..{self.ages[-1]}")
        return self.rates[k][health_groups(h, self.cutoffs[k])]

    def weighted_rate(self, shares=GROUP_SHARES) -> np.ndarray:
        shares = np.asarray(shares, float)
        if shares.ndim == 1:
            shares = np.broadcast_to(shares, self.rates.shape)
        return (self.rates * shares).sum(axis=1)

    def save(self, path) -> Path:
        rows = {"age": self.ages}
        for g in range(4):
            rows[f"rate_g{g}"] = self.rates[:, g]
        for j in range(3):
            rows[f"cut{j}"] = self.cutoffs[:, j]
        rows["lifetable"] = self.lifetable if self.lifetable is not None else np.nan
        rows["factor"] = self.factors if self.factors is not None else np.nan
        return write_frame(path, pd.DataFrame(rows))

    @classmethod
    def load(cls, path) -> "MortalityTable":
        df = pd.read_csv(path)
        return cls(df["age"].to_numpy(), df[[f"rate_g{g}" for g in range(4)]].to_numpy(),
                   df[[f"cut{j}" for j in range(3)]].to_numpy(), df["lifetable"].to_numpy(),
                   df["factor"].to_numpy())


def _lifetable_array(lifetable, ages) -> np.ndarray:
    if isinstance(lifetable, pd.DataFrame):
        lt = lifetable.set_index("age")["annual_death_rate"]
        missing = [int(a) for a in ages if a not in lt.index]
        if missing:
            raise LoadError(f"life table has no entry for ages {missing}")
        return lt.loc[list(ages)].to_numpy(float)
    arr = np.asarray(lifetable, float)
    if arr.shape != (len(ages),) or np.isnan(arr).any():
        raise LoadError("life table must cover every model age")
    return arr


def rescale_to_lifetable(raw, lifetable, health_distribution=None, ages=range(50, 86),
                         cutoffs=None) -> MortalityTable:
    """Scale each age's group rates by one factor to hit the life-table rate.

    Parameters
    ----------
    raw : RawRates or (n_ages, 4) array of annual rates
    lifetable : DataFrame (age, annual_death_rate) or array per age
    health_distribution : (4,) or (n_ages, 4) group shares
        Defaults to the shares implied by the cutoffs (0.2, 0.1, 0.2, 0.5).
    cutoffs : (3,) or (n_ages, 3) health levels separating the groups
    """
    ages = np.asarray(list(ages))
    rates = raw.annual_matrix(ages) if isinstance(raw, RawRates) else np.array(raw, dtype=float)
    target = _lifetable_array(lifetable, ages)
    shares = GROUP_SHARES if health_distribution is None else np.asarray(health_distribution, float)
    shares = np.broadcast_to(shares, rates.shape).astype(float)
    # empty cells borrow the nearest filled group at the same age
    for k in range(rates.shape[0]):
        bad = ~np.isfinite(rates[k])
        if bad.all():
            rates[k] = 1.0
        elif bad.any():
            good = np.flatnonzero(~bad)
            for g in np.flatnonzero(bad):
                rates[k, g] = rates[k, good[np.argmin(np.abs(good - g))]]
    weighted = (rates * shares).sum(axis=1)
    factors = np.empty(ages.size)
    for k in range(ages.size):
        if weighted[k] > 0:
            factors[k] = target[k] / weighted[k]
        else:
            # no deaths observed: flat profile at the life-table rate
            rates[k] = 1.0
            factors[k] = target[k] / shares[k].sum()
    scaled = rates * factors[:, None]
    clipped = scaled > 1.0
    if clipped.any():
        warnings.warn(f"{int(clipped.sum())} death probabilities clipped at 1 after rescaling", stacklevel=2)
        scaled = np.minimum(scaled, 1.0)
    if cutoffs is None:
        cutoffs = np.full((ages.size, 3), np.nan)
    return MortalityTable(ages, scaled, cutoffs, target, factors, clipped)


def health_cutoffs(process, percentiles=CUT_PERCENTILES) -> np.ndarray:
    """Level cutoffs per age from a discrete process's marginal distribution of health."""
    marg = process.marginals()
    out = np.empty((process.ages.size, len(percentiles)))
    for k in range(process.ages.size):
        lv = process.levels(k).ravel()
        w = (marg[k][:, None] * process.eps_weights[k][None, :]).ravel()
        out[k] = weighted_quantiles(lv, w, percentiles)
    return out


def weighted_quantiles(values, weights, probs) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, float)[order]
    w = np.asarray(weights, float)[order]
    mid = (np.cumsum(w) - 0.5 * w) / w.sum()
    return np.interp(np.asarray(probs, float), mid, v)


def group_shares(process, cutoffs) -> np.ndarray:
    """(n_ages, 4) mass of each health group under the process marginals."""
    marg = process.marginals()
    out = np.zeros((process.ages.size, 4))
    for k in range(process.ages.size):
        g = health_groups(process.levels(k), cutoffs[k])
        w = marg[k][:, None] * process.eps_weights[k][None, :]
        out[k] = np.bincount(g.ravel(), weights=w.ravel(), minlength=4)
    return out


def survival_curve(table: MortalityTable, health_path, ages=None) -> pd.Series:
    """Probability of being alive at the end of each age along a health path."""
    h = np.asarray(health_path, float)
    ages = table.ages[: h.size] if ages is None else np.asarray(ages)
    q = np.array([float(table.death_prob(int(a), hh)) for a, hh in zip(ages, h)])
    return pd.Series(np.cumprod(1.0 - q), index=ages, name="survival")
