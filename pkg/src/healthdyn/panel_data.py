"""Longitudinal person-wave panels and a synthetic generator with known truth.

The generator stands in for restricted survey micro-data. Every observed
column is produced from latent states that are kept in a sidecar frame, so
estimators downstream can be checked against the values that generated
the data.

Latent health per wave is ``f = mu(age, demographics) + eta + eps`` with
``eta`` from a canonical or nonlinear generator. Objective indicators load
on ``f`` (a one-factor model plus noise). Self-reported good health is
``1[Z'alpha + u > 0]`` with ``u ~ N(0, sigma2_u)``, so a probit of the
report on ``Z`` is correctly specified.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import norm

from .errors import ConfigError, LoadError
from .health_dynamics.canonical import CanonicalParams
from .health_dynamics.quantile import KinkedQuantileProcess
from .io import write_frame

BINARY_INDICATORS = ("eyesight", "hearing", "mobility", "adl", "iadl", "depression",
                     "heart", "other_disease", "eye_problems", "incontinence")
CONTINUOUS_INDICATORS = ("bmi", "grip")
INDICATORS = BINARY_INDICATORS + CONTINUOUS_INDICATORS

CORE_COLUMNS = ("person_id", "wave", "year", "age", "birth_year", "education", "has_partner",
                "self_reported_good", "hourly_wage", "hours_annual", "wealth_total",
                "housing_wealth", "dead_by_next_wave", "unemployment_rate")

#: Wave-year unemployment rates used by the generator.
UNEMPLOYMENT = {2002: 0.051, 2004: 0.047, 2006: 0.054, 2008: 0.057, 2010: 0.079,
                2012: 0.080, 2014: 0.062, 2016: 0.049, 2018: 0.041, 2020: 0.045}
#: House prices relative to 2004 (40% rise from 2002 to 2004).
HOUSE_PRICES = {2000: 0.62, 2002: 1 / 1.4, 2004: 1.0, 2006: 1.08, 2008: 1.05, 2010: 0.98,
                2012: 0.97, 2014: 1.06, 2016: 1.15, 2018: 1.18, 2020: 1.21}

BANDS = ((50, 59), (60, 69), (70, 90))


def _default_alpha() -> dict:
    return {"const": 1.4, "eyesight": -0.4, "hearing": -0.2, "mobility": -0.7, "adl": -0.5,
            "iadl": -0.4, "depression": -0.6, "heart": -0.3, "other_disease": -0.4,
            "eye_problems": -0.15, "incontinence": -0.3, "bmi": -0.03, "grip": 0.03}


def _default_prevalence() -> dict:
    return {"eyesight": 0.12, "hearing": 0.2, "mobility": 0.3, "adl": 0.15, "iadl": 0.12,
            "depression": 0.15, "heart": 0.18, "other_disease": 0.35, "eye_problems": 0.1,
            "incontinence": 0.06}


@dataclass
class SynthConfig:
    """Generator settings. Wealth and currency amounts are in pounds."""

    n_persons: int = 20_000
    n_waves: int = 6
    seed: int = 0
    first_year: int = 2002
    entry_ages: tuple = (50, 75)
    education_probs: tuple = (0.35, 0.40, 0.25)
    partner_prob: float = 0.7
    # latent health
    health_process: str = "nonlinear"
    canonical: CanonicalParams = field(default_factory=CanonicalParams.defaults)
    nonlinear: KinkedQuantileProcess = field(default_factory=KinkedQuantileProcess)
    age_slope: float = -0.02
    education_effect: float = 0.15
    partner_effect: float = 0.1
    # indicators and reporting
    alpha: dict = field(default_factory=_default_alpha)
    prevalence: dict = field(default_factory=_default_prevalence)
    loading: float = 1.0
    sigma2_u: float = 1.0
    # employment and hours by age band
    work_targets: tuple = (0.795, 0.407, 0.068)
    hours_targets: tuple = (1926.0, 1597.0, 950.0)
    hours_sd: float = 350.0
    work_health_slope: float = 0.6
    earnings: object = None
    # mortality: base annual rate exp(a + b*age), group multipliers lowest -> highest
    gompertz: tuple = (-10.3, 0.095)
    mortality_multipliers: tuple = (2.0, 1.4, 1.2, 1.0)
    # wealth: f_i + cubic in (age - 50) + pi_u * U + noise, in pounds
    wealth_poly: tuple = (6_100.0, -110.0, 0.5)
    wealth_cohort_means: dict = field(default_factory=lambda: {
        "1916-1925": 170_000.0, "1926-1935": 155_000.0, "1936-1945": 140_000.0,
        "1946-1955": 120_000.0, "1956-1965": 115_000.0})
    wealth_fe_sd: float = 50_000.0
    wealth_noise_sd: float = 20_000.0
    wealth_pi_u: float = -400_000.0
    housing_share: float = 0.6
    real_return: float = 0.02

    def validate(self) -> None:
        if self.n_persons <= 0 or self.n_waves <= 0:
            raise ConfigError("n_persons and n_waves must be positive")
        if self.n_waves < 3:
            raise ConfigError("n_waves must be at least 3")
        if self.health_process not in ("nonlinear", "canonical"):
            raise ConfigError("health_process must be 'nonlinear' or 'canonical'")
        for name in ("sigma2_u", "hours_sd", "wealth_fe_sd", "wealth_noise_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.sigma2_u == 0:
            raise ConfigError("sigma2_u must be > 0 for a binary-response model")
        if abs(sum(self.education_probs) - 1) > 1e-9:
            raise ConfigError("education_probs must sum to one")
        lo, hi = self.entry_ages
        if lo < 50 or hi < lo:
            raise ConfigError("entry ages must satisfy 50 <= lo <= hi")
        if len(self.mortality_multipliers) != 4 or min(self.mortality_multipliers) < 0:
            raise ConfigError("four non-negative mortality multipliers are required")

    @property
    def earnings_process(self):
        from .earnings import EarningsProcess

        return self.earnings if self.earnings is not None else EarningsProcess()


@dataclass
class Panel:
    """Observed records in ``data`` and (optionally) latent truth in ``truth``."""

    data: pd.DataFrame
    truth: pd.DataFrame | None = None
    config: SynthConfig | None = None

    @property
    def indicator_columns(self) -> list[str]:
        return [c for c in self.data.columns if c not in CORE_COLUMNS]

    def __len__(self) -> int:
        return len(self.data)

    def save(self, path: str | Path, truth_path: str | Path | None = None) -> Path:
        path = Path(path)
        write_frame(path, _to_csv_frame(self.data))
        if self.truth is not None:
            tp = Path(truth_path) if truth_path else path.with_name(path.stem + "_truth.csv")
            write_frame(tp, self.truth)
        return path


def _to_csv_frame(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    for col in ("has_partner", "self_reported_good", "dead_by_next_wave"):
        out[col] = out[col].astype(int)
    return out


def cohort_label(birth_year, width: int = 10, anchor: int = 1946) -> np.ndarray:
    by = np.asarray(birth_year, int)
    lo = anchor + width * np.floor_divide(by - anchor, width)
    return np.array([f"{l}-{l + width - 1}" for l in lo])


def _mortality_groups(h: np.ndarray, age: np.ndarray, width: int = 5) -> np.ndarray:
    """Group 0..3 by 20/30/50th percentile cutoffs within 5-year age bands."""
    g = np.zeros(h.size, dtype=np.int64)
    band = (age - 50) // width
    for b in np.unique(band):
        m = band == b
        cut = np.quantile(h[m], [0.2, 0.3, 0.5])
        g[m] = np.searchsorted(cut, h[m], side="right")
    return g


def generate_panel(config: SynthConfig | None = None) -> Panel:
    """Simulate a panel wave by wave; deterministic in ``config.seed``."""
    cfg = config or SynthConfig()
    cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    (r_demo, r_health, r_ind, r_work, r_wage, r_death, r_wealth) = [
        np.random.default_rng(s) for s in ss.spawn(7)]
    n = cfg.n_persons
    pid = np.arange(1, n + 1)
    entry_age = r_demo.integers(cfg.entry_ages[0], cfg.entry_ages[1] + 1, n)
    birth_year = cfg.first_year - entry_age
    educ = r_demo.choice(3, size=n, p=np.asarray(cfg.education_probs))
    partner = r_demo.uniform(size=n) < cfg.partner_prob

    # persistent health: start at 50 and burn in to entry age (biennial steps)
    gen = cfg.nonlinear if cfg.health_process == "nonlinear" else cfg.canonical
    eta = gen.draw_initial(r_health, n)
    burn = (entry_age - 50) // 2
    for k in range(int(burn.max()) if n else 0):
        u = r_health.uniform(size=n)
        eta = np.where(burn > k, gen.step(eta, u), eta)
    sd_eps = np.sqrt(gen.transitory_variance)

    # indicator thresholds from a reference draw of latent health
    names = list(INDICATORS)
    alpha = np.array([cfg.alpha[k] for k in ["const"] + names])
    prev = cfg.prevalence
    ref_f = eta + r_ind.normal(0, sd_eps, n)
    ref_sd = np.sqrt(cfg.loading**2 * np.var(ref_f) + 1.0)
    thresh = {k: norm.ppf(prev[k]) * ref_sd for k in BINARY_INDICATORS}

    earn = cfg.earnings_process
    theta = r_wage.normal(0, np.sqrt(earn.sigma2_0), n)
    for k in range(int(burn.max()) if n else 0):
        theta = np.where(burn > k, earn.rho * theta + r_wage.normal(0, np.sqrt(earn.sigma2_nu), n), theta)

    cohorts = cohort_label(birth_year)
    fe_mean = np.array([cfg.wealth_cohort_means.get(c, np.mean(list(cfg.wealth_cohort_means.values())))
                        for c in cohorts])
    fe = fe_mean + r_wealth.normal(0, cfg.wealth_fe_sd, n)
    share = np.clip(cfg.housing_share + r_wealth.normal(0, 0.15, n), 0.0, 1.0)

    alive = np.ones(n, dtype=bool)
    frames, truths = [], []
    index_mean = index_sd = None
    for w in range(cfg.n_waves):
        year = cfg.first_year + 2 * w
        if year not in UNEMPLOYMENT or year not in HOUSE_PRICES:
            raise ConfigError(f"no aggregate series for year {year}; reduce n_waves")
        if w > 0:
            eta = gen.step(eta, r_health.uniform(size=n))
            theta = earn.rho * theta + r_wage.normal(0, np.sqrt(earn.sigma2_nu), n)
        age = entry_age + 2 * w
        eps = r_health.normal(0, sd_eps, n)
        f = (cfg.age_slope * (age - 50) + cfg.education_effect * (educ - 1)
             + cfg.partner_effect * (partner - cfg.partner_prob) + eta + eps)
        Z = np.empty((n, len(names)))
        for j, k in enumerate(BINARY_INDICATORS):
            Z[:, j] = (cfg.loading * f + r_ind.standard_normal(n) < thresh[k]).astype(float)
        Z[:, len(BINARY_INDICATORS)] = 27.0 - 1.5 * f + r_ind.normal(0, 4.0, n)
        Z[:, len(BINARY_INDICATORS) + 1] = 38.0 + 6.0 * f - 0.25 * (age - 50) + r_ind.normal(0, 5.0, n)
        psi = alpha[0] + Z @ alpha[1:]
        h_star = psi + r_ind.normal(0, np.sqrt(cfg.sigma2_u), n)
        if index_mean is None:
            index_mean, index_sd = psi[alive].mean(), psi[alive].std()
            if not index_sd > 0:  # a single person has no spread to standardize by
                index_sd = 1.0
        h_true = (psi - index_mean) / index_sd

        # employment: per-band intercept solved on the living sample
        band = np.digitize(age, [60, 70])
        works = np.zeros(n, dtype=bool)
        u_work = r_work.uniform(size=n)
        for b, target in enumerate(cfg.work_targets):
            m = alive & (band == b)
            if not m.any():
                continue
            hb = h_true[m]
            c = _solve_intercept(hb, cfg.work_health_slope, target)
            works[m] = u_work[m] < norm.cdf(c + cfg.work_health_slope * hb)
        hours = np.where(works, np.maximum(
            np.asarray(cfg.hours_targets)[band] + r_work.normal(0, cfg.hours_sd, n), 100.0), 0.0)
        ups = r_wage.normal(0, np.sqrt(earn.sigma2_ups), n)
        offer = np.exp(earn.omega(h_true, np.minimum(age, 69)) + theta)
        wage = np.where(works, offer * np.exp(ups), np.nan)

        # wealth in constant pounds, housing part observed at market prices
        a = age - 50.0
        wealth_real = (fe + cfg.wealth_poly[0] * a + cfg.wealth_poly[1] * a**2 + cfg.wealth_poly[2] * a**3
                       + cfg.wealth_pi_u * UNEMPLOYMENT[year] + r_wealth.normal(0, cfg.wealth_noise_sd, n))
        housing_real = share * np.maximum(wealth_real, 0.0)
        housing_obs = housing_real * HOUSE_PRICES[year] / (1.0 + cfg.real_return) ** (year - 2004)
        total_obs = wealth_real - housing_real + housing_obs

        # death before next wave
        base = np.exp(cfg.gompertz[0] + cfg.gompertz[1] * age)
        groups = np.zeros(n, dtype=np.int64)
        groups[alive] = _mortality_groups(h_true[alive], age[alive])
        mult = np.asarray(cfg.mortality_multipliers)
        mean_mult = 0.2 * mult[0] + 0.1 * mult[1] + 0.2 * mult[2] + 0.5 * mult[3]
        p_annual = np.clip(base * mult[groups] / mean_mult, 0.0, 1.0)
        p_bien = 1.0 - (1.0 - p_annual) ** 2
        dies = (r_death.uniform(size=n) < p_bien) & (w < cfg.n_waves - 1)

        m = alive
        rec = {"person_id": pid[m], "wave": np.full(m.sum(), w), "year": np.full(m.sum(), year),
               "age": age[m], "birth_year": birth_year[m], "education": educ[m],
               "has_partner": partner[m]}
        for j, k in enumerate(names):
            rec[k] = Z[m, j]
        rec.update({"self_reported_good": h_star[m] > 0, "hourly_wage": wage[m],
                    "hours_annual": hours[m], "wealth_total": total_obs[m],
                    "housing_wealth": housing_obs[m], "dead_by_next_wave": dies[m],
                    "unemployment_rate": np.full(m.sum(), UNEMPLOYMENT[year])})
        frames.append(pd.DataFrame(rec))
        truths.append(pd.DataFrame({
            "person_id": pid[m], "wave": np.full(m.sum(), w), "eta": eta[m], "eps": eps[m],
            "latent": f[m], "psi": psi[m], "h_star": h_star[m], "h_true": h_true[m],
            "mortality_group": groups[m], "p_death_annual": p_annual[m], "theta": theta[m],
            "wage_offer": offer[m], "wealth_real": wealth_real[m], "housing_real": housing_real[m],
            "fixed_effect": fe[m]}))
        alive = alive & ~dies
    data = pd.concat(frames, ignore_index=True).sort_values(["person_id", "wave"], kind="stable")
    truth = pd.concat(truths, ignore_index=True).sort_values(["person_id", "wave"], kind="stable")
    return Panel(data.reset_index(drop=True), truth.reset_index(drop=True), cfg)


def _solve_intercept(h: np.ndarray, slope: float, target: float) -> float:
    from scipy.optimize import brentq

    # wide enough that every index saturates at both ends
    width = 40.0 + abs(slope) * float(np.abs(h).max(initial=0.0))
    return brentq(lambda c: norm.cdf(c + slope * h).mean() - target, -width, width, xtol=1e-12)


def load_panel(path: str | Path, truth_path: str | Path | None = None) -> Panel:
    """Read a ``panel_v1`` CSV and check its invariants."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{path}: file not found")
    df = pd.read_csv(path)
    missing = [c for c in CORE_COLUMNS if c not in df.columns]
    if missing:
        raise LoadError(f"{path}: missing columns {missing}")
    for col in ("has_partner", "self_reported_good", "dead_by_next_wave"):
        if df[col].isna().any() or not df[col].isin([0, 1]).all():
            bad = int(np.flatnonzero(~df[col].isin([0, 1]).to_numpy())[0])
            raise LoadError(f"{path}: row {bad + 2}: {col} must be 0 or 1")
        df[col] = df[col].astype(bool)
    validate_panel(df, source=str(path))
    truth = pd.read_csv(truth_path) if truth_path else None
    return Panel(df, truth)


def validate_panel(df: pd.DataFrame, source: str = "panel") -> None:
    """Raise :class:`LoadError` naming the first offending row (1-based file line)."""

    def fail(i, msg):
        raise LoadError(f"{source}: row {int(i) + 2}: {msg}")

    bad = np.flatnonzero((df["age"] < 50).to_numpy())
    if bad.size:
        fail(bad[0], "age below 50")
    bad = np.flatnonzero((df["hours_annual"] < 0).to_numpy())
    if bad.size:
        fail(bad[0], "negative hours")
    pid = df["person_id"].to_numpy()
    wave = df["wave"].to_numpy()
    dead = df["dead_by_next_wave"].to_numpy(bool)
    same = pid[1:] == pid[:-1]
    bad = np.flatnonzero(same & (wave[1:] <= wave[:-1]))
    if bad.size:
        fail(bad[0] + 1, "waves not strictly increasing within person")
    bad = np.flatnonzero(same & dead[:-1])
    if bad.size:
        fail(bad[0] + 1, "record after death")
    # a person split across non-adjacent blocks breaks the ordering checks above
    first = pd.Series(np.arange(len(pid))).groupby(pid).agg(["min", "max", "size"])
    split = first[(first["max"] - first["min"] + 1) != first["size"]]
    if len(split):
        fail(split["min"].iloc[0], f"records of person {split.index[0]} are not contiguous")


def panel_summary(panel, bands=BANDS) -> pd.DataFrame:
    """Working share (%), hours and earnings of workers, mean wealth, by age band."""
    df = getattr(panel, "data", panel)
    if len(df) == 0:
        raise ValueError("empty panel")
    out = {}
    for lo, hi in bands:
        d = df[(df["age"] >= lo) & (df["age"] <= hi)]
        work = d["hours_annual"] > 0
        earn = (d["hourly_wage"] * d["hours_annual"])[work]
        out[f"{lo}-{hi}"] = {
            "pct_working": 100.0 * work.mean() if len(d) else np.nan,
            "hours_if_working": d.loc[work, "hours_annual"].mean() if work.any() else np.nan,
            "earnings_if_working": earn.mean() if work.any() else np.nan,
            "mean_wealth": d["wealth_total"].mean() if len(d) else np.nan,
        }
    return pd.DataFrame(out)
