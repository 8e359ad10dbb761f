"""Cohort-corrected wealth age profile.

Wealth is regressed on a person effect, a polynomial in age and the
unemployment rate (a proxy for aggregate time effects). The estimated
effects are averaged by ten-year birth cohort so a profile can be built
for any reference cohort at a fixed unemployment rate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InsufficientDataError, LoadError
from .panel_data import cohort_label

AGE_CENTER = 50.0


def deflate_housing(records: pd.DataFrame, price_index, reference_year: int = 2004,
                    real_return: float = 0.02) -> pd.DataFrame:
    """Strip house-price changes out of housing wealth.

    Housing is divided by the price index (normalized to 1 in
    ``reference_year``) and then grown at ``real_return`` per year from the
    reference year. ``wealth_total`` becomes non-housing wealth plus the
    corrected housing value.
    """
    idx = price_index if isinstance(price_index, pd.Series) else (
        pd.DataFrame(price_index).set_index("year")["index"] if isinstance(price_index, pd.DataFrame)
        else pd.Series(price_index))
    if reference_year not in idx.index:
        raise LoadError(f"price index has no entry for reference year {reference_year}")
    idx = idx / idx.loc[reference_year]
    years = records["year"].to_numpy()
    missing = sorted(set(int(y) for y in years) - set(int(y) for y in idx.index))
    if missing:
        raise LoadError(f"price index has no entry for years {missing}")
    factor = idx.reindex(years).to_numpy(float)
    growth = (1.0 + real_return) ** (years - reference_year)
    out = records.copy()
    non_housing = out["wealth_total"].to_numpy(float) - out["housing_wealth"].to_numpy(float)
    housing = out["housing_wealth"].to_numpy(float) / factor * growth
    out["housing_wealth"] = housing
    out["wealth_total"] = non_housing + housing
    return out


@dataclass
class WealthProfileModel:
    age_coef: np.ndarray            # pi_1..pi_S on (age - 50)**n
    pi_u: float                     # NaN when not identified
    fixed_effects: pd.Series        # by person_id
    cohort_means: pd.Series         # E[f | cohort]
    person_cohort: pd.Series        # cohort label by person_id
    reference_cohort: str = "1946-1955"
    dropped_single_wave: int = 0
    residuals: pd.Series = field(default=None, repr=False)

    @property
    def order(self) -> int:
        return self.age_coef.size

    def age_part(self, age) -> np.ndarray:
        a = np.asarray(age, float) - AGE_CENTER
        return sum(c * a ** (n + 1) for n, c in enumerate(self.age_coef))

    def adjusted_effects(self, cohort: str | None) -> pd.Series:
        """``f_i - E[f | own cohort] + E[f | cohort]`` (own cohort when None)."""
        f = self.fixed_effects
        if cohort is None:
            return f.copy()
        if cohort not in self.cohort_means.index:
            raise KeyError(f"cohort {cohort!r} not in model (have {list(self.cohort_means.index)})")
        own = self.cohort_means.reindex(self.person_cohort.reindex(f.index)).to_numpy()
        return f - own + self.cohort_means[cohort]

    def predict(self, frame: pd.DataFrame, cohort: str | None = None, unemployment=None) -> np.ndarray:
        """Per-record wealth for persons in the estimation sample."""
        f = self.adjusted_effects(cohort).reindex(frame["person_id"]).to_numpy()
        u = frame["unemployment_rate"].to_numpy(float) if unemployment is None else unemployment
        pu = 0.0 if np.isnan(self.pi_u) else self.pi_u
        return f + self.age_part(frame["age"]) + pu * np.asarray(u, float)


def fit_wealth_profile(panel, wealth_col: str = "wealth_total", order: int = 3,
                       reference_cohort: str = "1946-1955", cohort_width: int = 10) -> WealthProfileModel:
    """Within-person regression of wealth on an age polynomial and unemployment."""
    if order < 1:
        raise ValueError("polynomial order must be >= 1")
    df = getattr(panel, "data", panel)
    df = df[["person_id", "age", "birth_year", "unemployment_rate", wealth_col]].dropna()
    counts = df.groupby("person_id")["age"].transform("size")
    dropped = int(df.loc[counts < 2, "person_id"].nunique())
    if dropped:
        warnings.warn(f"dropped {dropped} persons observed once", stacklevel=2)
    df = df[counts >= 2]
    if df.empty:
        raise InsufficientDataError("no person observed in two or more waves")
    pid = df["person_id"].to_numpy()
    a = df["age"].to_numpy(float) - AGE_CENTER
    X = np.column_stack([a ** (n + 1) for n in range(order)] + [df["unemployment_rate"].to_numpy(float)])
    y = df[wealth_col].to_numpy(float)

    def within(v):
        return v - pd.DataFrame(v).groupby(pid).transform("mean").to_numpy().reshape(v.shape)

    Xw = within(X)
    yw = within(y)
    u_var = np.abs(Xw[:, -1]).max()
    identified_u = u_var > 1e-12 and np.linalg.matrix_rank(Xw) == Xw.shape[1]
    if not identified_u:
        Xw = Xw[:, :-1]
    if np.linalg.matrix_rank(Xw) < Xw.shape[1]:
        raise InsufficientDataError("age polynomial not identified within persons")
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    age_coef = coef[:order]
    pi_u = float(coef[order]) if identified_u else np.nan
    fitted_slopes = X[:, :order] @ age_coef + (X[:, -1] * pi_u if identified_u else 0.0)
    fe = pd.Series(y - fitted_slopes).groupby(pid).mean()
    resid = y - fitted_slopes - fe.reindex(pid).to_numpy()
    birth = df.groupby("person_id")["birth_year"].first()
    cohort = pd.Series(cohort_label(birth.to_numpy(), cohort_width), index=birth.index)
    cohort_means = fe.groupby(cohort.reindex(fe.index).to_numpy()).mean()
    return WealthProfileModel(np.asarray(age_coef, float), pi_u, fe, cohort_means, cohort,
                              reference_cohort, dropped, pd.Series(resid, index=df.index))


def simulate_profile(model: WealthProfileModel, cohort: str | None = "1946-1955",
                     unemployment: float = 0.049, ages=range(50, 86)) -> pd.DataFrame:
    """Mean wealth by age for everyone re-assigned to ``cohort``."""
    cohort = model.reference_cohort if cohort is None else cohort
    f = model.adjusted_effects(cohort)
    ages = np.asarray(list(ages), float)
    pu = 0.0 if np.isnan(model.pi_u) else model.pi_u
    mean_wealth = f.mean() + model.age_part(ages) + pu * unemployment
    return pd.DataFrame({"age": ages.astype(int), "mean_wealth": mean_wealth})
