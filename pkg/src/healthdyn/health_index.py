"""Continuous health index from objective indicators.

A binary-response model of self-reported good health on the indicators
``Z`` gives a linear index ``Z'alpha``; the index is that prediction,
standardized over the estimation sample. Residuals on demographics feed
the dynamics estimators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import statsmodels.api as sm
from statsmodels.tools.sm_exceptions import PerfectSeparationError, PerfectSeparationWarning

from .errors import NumericalError, SeparationError, SingularDesignError
from .io import read_keyed, write_keyed

CORE = {"person_id", "wave", "year", "age", "birth_year", "education", "has_partner",
        "self_reported_good", "hourly_wage", "hours_annual", "wealth_total", "housing_wealth",
        "dead_by_next_wave", "unemployment_rate"}


@dataclass
class HealthIndexModel:
    indicators: list
    coef: np.ndarray  # intercept first
    mean: float
    sd: float
    link: str = "probit"
    converged: bool = True
    llf: float = np.nan
    n_obs: int = 0
    iterations: int = 0

    def __post_init__(self):
        self.coef = np.asarray(self.coef, float)
        if self.coef.size != len(self.indicators) + 1:
            raise ValueError("coefficient vector must have one entry per indicator plus intercept")
        if not self.sd > 0:
            raise ValueError("index sd must be positive")

    @property
    def slopes(self) -> pd.Series:
        return pd.Series(self.coef[1:], index=self.indicators)

    def linear_index(self, Z: np.ndarray) -> np.ndarray:
        return self.coef[0] + np.asarray(Z, float) @ self.coef[1:]

    def save(self, path) -> None:
        values = {"link": self.link, "mean": self.mean, "sd": self.sd, "n_obs": self.n_obs,
                  "converged": self.converged, "coef.const": float(self.coef[0])}
        values.update({f"coef.{k}": float(v) for k, v in zip(self.indicators, self.coef[1:])})
        write_keyed(path, "hindex_v1", values)

    @classmethod
    def load(cls, path) -> "HealthIndexModel":
        raw = read_keyed(path, "hindex_v1")
        names = [k[5:] for k in raw if k.startswith("coef.") and k != "coef.const"]
        coef = [float(raw["coef.const"])] + [float(raw[f"coef.{k}"]) for k in names]
        return cls(names, np.array(coef), float(raw["mean"]), float(raw["sd"]), raw["link"],
                   raw["converged"] == "true", n_obs=int(raw["n_obs"]))


def _indicator_columns(df: pd.DataFrame, indicators) -> list:
    if indicators is not None:
        return list(indicators)
    return [c for c in df.columns if c not in CORE]


def _check_design(Z: np.ndarray, names: list) -> None:
    X = np.column_stack([np.ones(len(Z)), Z])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        const = [n for n, col in zip(names, Z.T) if np.ptp(col) == 0]
        if const:
            raise SingularDesignError(f"indicator(s) {const} are constant and collinear with the intercept")
        for i in range(Z.shape[1]):
            for j in range(i + 1, Z.shape[1]):
                if np.allclose(Z[:, i], Z[:, j]):
                    raise SingularDesignError(f"indicators {names[i]!r} and {names[j]!r} are identical")
        raise SingularDesignError("indicator design matrix is rank deficient")


def _check_separation(Z: np.ndarray, y: np.ndarray, names: list) -> None:
    for name, col in zip(names, Z.T):
        levels = np.unique(col)
        if levels.size > 2:
            continue
        for lv in levels:
            yy = y[col == lv]
            if yy.size and (yy.min() == yy.max()):
                raise SeparationError(
                    f"indicator {name!r} = {lv:g} perfectly predicts the self-report ({int(yy[0])})")


def fit_latent_index(panel, indicators=None, link: str = "probit", maxiter: int = 200) -> HealthIndexModel:
    """Binary-response fit of self-reported good health on the indicators.

    Uses every record with complete indicators and a report. The fitted
    linear index is standardized to mean 0 and sd 1 (population sd) over
    those records.
    """
    df = getattr(panel, "data", panel)
    names = _indicator_columns(df, indicators)
    sub = df[names + ["self_reported_good"]].dropna()
    if len(sub) < len(names) + 2:
        raise SingularDesignError("too few complete records for the indicator model")
    Z = sub[names].to_numpy(float)
    y = sub["self_reported_good"].to_numpy(float)
    _check_design(Z, names)
    _check_separation(Z, y, names)
    X = sm.add_constant(Z, has_constant="add")
    model_cls = {"probit": sm.Probit, "logit": sm.Logit}.get(link)
    if model_cls is None:
        raise ValueError("link must be 'probit' or 'logit'")
    with warnings.catch_warnings():
        warnings.simplefilter("error", PerfectSeparationWarning)
        try:
            res = model_cls(y, X).fit(method="newton", maxiter=maxiter, tol=1e-12, disp=False)
        except (PerfectSeparationError, PerfectSeparationWarning) as exc:
            raise SeparationError(f"perfect separation in the indicator model: {exc}") from exc
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError(str(exc)) from exc
    coef = np.asarray(res.params, float)
    if not np.all(np.isfinite(coef)):
        raise NumericalError("non-finite coefficients in the indicator model")
    idx = X @ coef
    converged = bool(res.mle_retvals.get("converged", True))
    return HealthIndexModel(names, coef, float(idx.mean()), float(idx.std()), link, converged,
                            float(res.llf), int(len(sub)), int(res.mle_retvals.get("iterations", 0)))


def predict_index(model: HealthIndexModel, panel) -> pd.Series:
    """Standardized index per record; NaN where any indicator is missing."""
    df = getattr(panel, "data", panel)
    Z = df[model.indicators].to_numpy(float)
    out = (model.linear_index(Z) - model.mean) / model.sd
    return pd.Series(out, index=df.index, name="h_index")


@dataclass
class Residualizer:
    columns: list
    coef: np.ndarray
    education_levels: list = field(default_factory=list)

    def design(self, demo: pd.DataFrame) -> np.ndarray:
        return _demographic_design(demo, self.education_levels)[0]

    def apply(self, index, demo: pd.DataFrame) -> pd.Series:
        x = np.asarray(index, float)
        return pd.Series(x - self.design(demo) @ self.coef, index=demo.index, name="h_resid")


def _demographic_design(demo: pd.DataFrame, levels=None):
    a = (demo["age"].to_numpy(float) - 50.0) / 10.0
    by = (demo["birth_year"].to_numpy(float) - 1940.0) / 10.0
    educ = demo["education"].to_numpy()
    levels = sorted(pd.unique(educ).tolist()) if levels is None else list(levels)
    cols = [np.ones_like(a), a, a**2, a**3, by]
    names = ["const", "age", "age2", "age3", "birth_year"]
    for lv in levels[1:]:
        cols.append((educ == lv).astype(float))
        names.append(f"education_{lv}")
    cols.append(demo["has_partner"].to_numpy(float))
    names.append("has_partner")
    return np.column_stack(cols), names, levels


def residualize(index, demographics: pd.DataFrame, return_model: bool = False):
    """Least-squares residuals of the index on cubic age, birth year, education, partner.

    Records with a missing index get a missing residual.
    """
    demo = getattr(demographics, "data", demographics)
    x = np.asarray(index, float)
    if demo[["age", "birth_year", "education", "has_partner"]].isna().any().any():
        raise ValueError("demographics must be complete")
    X, names, levels = _demographic_design(demo)
    ok = np.isfinite(x)
    if np.linalg.matrix_rank(X[ok]) < X.shape[1]:
        raise SingularDesignError(f"demographic design is rank deficient (columns {names})")
    coef, *_ = np.linalg.lstsq(X[ok], x[ok], rcond=None)
    model = Residualizer(names, coef, levels)
    res = model.apply(x, demo)
    return (res, model) if return_model else res
