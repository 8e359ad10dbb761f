"""Simulated method of moments with simulated annealing and a simplex polish.

Each start runs cycles of annealing followed by Nelder-Mead from the
annealing incumbent. A start ends when a cycle returns (within
``cycle_tol``) to the vector it began from. The simulation seed is fixed,
so the objective is a deterministic function of the parameters.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.stats import qmc

from .errors import ConfigError
from .io import write_frame
from .lifecycle.inputs import ModelInputs
from .lifecycle.params import ModelParams
from .lifecycle.solver import solve
from .mortality import CUT_PERCENTILES, health_groups
from .simulation import ASSET_AGES, WORK_AGES, InitialDistribution, compute_moments, simulate_histories

log = logging.getLogger(__name__)

#: Estimable parameter names and how they map onto ModelParams fields.
PARAM_NAMES = ("gamma", "phi_b", "K", "phi_h1", "phi_h2", "phi_h3", "phi_h4", "phi_w1", "phi_w2", "phi_w3")


def get_param(params: ModelParams, name: str) -> float:
    if name.startswith("phi_h"):
        return float(params.phi_h[int(name[-1]) - 1])
    if name.startswith("phi_w"):
        return float(params.phi_w[int(name[-1]) - 1])
    return float(getattr(params, name))


def set_params(params: ModelParams, values: dict) -> ModelParams:
    phi_h = list(params.phi_h)
    phi_w = list(params.phi_w)
    kw = {}
    for name, v in values.items():
        if name not in PARAM_NAMES:
            raise ConfigError(f"unknown estimable parameter {name!r}")
        if name.startswith("phi_h"):
            phi_h[int(name[-1]) - 1] = float(v)
        elif name.startswith("phi_w"):
            phi_w[int(name[-1]) - 1] = float(v)
        else:
            kw[name] = float(v)
    return replace(params, phi_h=tuple(phi_h), phi_w=tuple(phi_w), **kw)


def _aligned(sim: pd.DataFrame, data: pd.DataFrame):
    s = sim.set_index("moment_id")["value"]
    d = data.set_index("moment_id")["value"]
    common = s.index.intersection(d.index)
    if common.empty:
        raise ValueError("simulated and data moments share no moment ids")
    return s, d, common


def loss(sim: pd.DataFrame, data: pd.DataFrame, weights=None, return_skipped: bool = False):
    """Weighted sum of squared moment differences.

    Moments missing on either side (absent id or NaN value) are skipped.
    ``weights`` is a Series indexed by moment id (identity when None).
    """
    s, d, _ = _aligned(sim, data)
    ids = d.index
    diff = s.reindex(ids) - d
    w = pd.Series(1.0, index=ids) if weights is None else pd.Series(weights).reindex(ids).fillna(0.0)
    ok = diff.notna()
    value = float((w[ok] * diff[ok] ** 2).sum())
    skipped = int((~ok).sum())
    return (value, skipped) if return_skipped else value


def data_moments(records: pd.DataFrame, health: str = "h", wealth: str = "wealth_total",
                 asset_ages=ASSET_AGES, work_ages=WORK_AGES) -> pd.DataFrame:
    """Panel analogues of :func:`~healthdyn.simulation.compute_moments`.

    ``records`` is person-wave data with ``age``, ``hours_annual``, the
    wealth column and a health column. Cells without records are NaN.
    """
    df = getattr(records, "data", records)
    rows = []
    for age in asset_ages:
        v = df.loc[df["age"] == age, wealth].dropna()
        rows.append((f"assets_{age}", "assets", age, 0, v.mean() if len(v) else np.nan, len(v)))
    for age in work_ages:
        v = df.loc[(df["age"] == age) & (df["hours_annual"] > 0), "hours_annual"]
        rows.append((f"hours_{age}", "hours", age, 0, v.mean() if len(v) else np.nan, len(v)))
    for age in work_ages:
        d = df[(df["age"] == age) & df[health].notna()]
        h = d[health].to_numpy(float)
        work = d["hours_annual"].to_numpy(float) > 0
        grp = health_groups(h, np.quantile(h, CUT_PERCENTILES)) if len(d) else np.empty(0, int)
        for g in range(4):
            sel = grp == g
            rows.append((f"participation_{age}_q{g + 1}", "participation", age, g + 1,
                         work[sel].mean() if sel.any() else np.nan, int(sel.sum())))
    out = pd.DataFrame(rows, columns=["moment_id", "kind", "age", "quartile", "value", "n"])
    out["missing"] = out["value"].isna()
    return out


def diagonal_weights(data: pd.DataFrame, floor: float = 1e-8) -> pd.Series:
    """Weights ``1 / max(|m|, floor)**2`` so each moment counts in relative terms."""
    v = data.set_index("moment_id")["value"].abs()
    return 1.0 / np.maximum(v, floor) ** 2


@dataclass(frozen=True)
class SmmConfig:
    free: tuple = ("gamma",)
    bounds: dict = field(default_factory=lambda: {"gamma": (0.2, 0.6)})
    start: dict | None = None
    weighting: str = "identity"
    n_histories: int = 15_000
    sim_seed: int = 0
    seed: int = 0
    n_starts: int = 5
    temperature: float | None = None
    cooling: float = 0.8
    n_temperatures: int = 8
    steps_per_temperature: int = 8
    step_scale: float = 0.05
    xatol: float = 1e-4
    fatol: float = 0.0
    simplex_maxiter: int = 200
    max_cycles: int = 4
    cycle_tol: float = 1e-3
    max_evals: int = 20_000
    time_endowment: float = 4880.0

    def __post_init__(self):
        for name in self.free:
            if name not in self.bounds:
                raise ConfigError(f"no bounds for free parameter {name!r}")
            lo, hi = self.bounds[name]
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"bounds for {name!r} must be finite with lo < hi")
        if "K" in self.bounds and self.bounds["K"][0] <= 0:
            raise ConfigError("lower bound for K must be positive")
        for name in ("phi_h1", "phi_h2", "phi_h3", "phi_h4"):
            if name in self.bounds and self.bounds[name][1] >= self.time_endowment:
                raise ConfigError(f"upper bound for {name!r} must be below the time endowment")
        if self.weighting not in ("identity", "diagonal"):
            raise ConfigError("weighting must be 'identity' or 'diagonal'")
        if self.start is not None:
            for name in self.free:
                lo, hi = self.bounds[name]
                if not lo <= self.start[name] <= hi:
                    raise ConfigError(f"start value for {name!r} outside its bounds")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[n][0] for n in self.free], float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[n][1] for n in self.free], float)


@dataclass
class ParamEstimate:
    values: dict
    loss: float
    trace: pd.DataFrame
    fit: pd.DataFrame | None
    converged: bool
    n_evals: int
    params: ModelParams | None = None
    messages: list = field(default_factory=list)
    n_skipped: int = 0

    def save_trace(self, path):
        return write_frame(path, self.trace)


class _Objective:
    """Memoized objective on the unit cube with an evaluation log."""

    def __init__(self, fn, lower, upper, names, max_evals):
        self.fn, self.lower, self.upper, self.names = fn, lower, upper, names
        self.cache: dict = {}
        self.rows: list = []
        self.best = np.inf
        self.max_evals = max_evals
        self.stage = ""
        self.start = 0

    def to_x(self, u):
        return self.lower + np.asarray(u, float) * (self.upper - self.lower)

    def __call__(self, u) -> float:
        u = np.asarray(u, float)
        if np.any(u < 0) or np.any(u > 1):
            return np.inf
        key = u.tobytes()
        if key in self.cache:
            return self.cache[key]
        if len(self.cache) >= self.max_evals:
            raise _Budget
        x = self.to_x(u)
        try:
            val = float(self.fn(dict(zip(self.names, x))))
        except ValueError:
            val = np.inf
        if not np.isfinite(val):
            val = np.inf
        self.cache[key] = val
        self.best = min(self.best, val)
        self.rows.append({"iteration": len(self.rows), **dict(zip(self.names, x)), "loss": val,
                          "best_loss": self.best, "start": self.start, "stage": self.stage})
        return val


class _Budget(Exception):
    pass


def _anneal(obj: _Objective, u0, cfg: SmmConfig, rng: np.random.Generator):
    obj.stage = "anneal"
    cur_u, cur_f = np.asarray(u0, float), obj(u0)
    best_u, best_f = cur_u.copy(), cur_f
    T0 = cfg.temperature if cfg.temperature is not None else max(0.1 * abs(cur_f), 1e-12)
    T = T0
    for _ in range(cfg.n_temperatures):
        scale = cfg.step_scale * T / T0
        for _ in range(cfg.steps_per_temperature):
            prop = cur_u + rng.normal(0.0, scale, cur_u.size)
            if np.any(prop < 0) or np.any(prop > 1):
                continue  # barrier: proposals outside the bounds are rejected
            f = obj(prop)
            if f <= cur_f or rng.uniform() < np.exp(-(f - cur_f) / T):
                cur_u, cur_f = prop, f
                if f < best_f:
                    best_u, best_f = prop.copy(), f
        T *= cfg.cooling
    return best_u, best_f


def _simplex(obj: _Objective, u0, cfg: SmmConfig):
    obj.stage = "simplex"
    k = u0.size
    simplex = [u0]
    for j in range(k):
        v = u0.copy()
        v[j] = v[j] + 0.05 if v[j] + 0.05 <= 1 else v[j] - 0.05
        simplex.append(v)
    res = optimize.minimize(obj, u0, method="Nelder-Mead", bounds=[(0.0, 1.0)] * k,
                            options=dict(xatol=cfg.xatol, fatol=cfg.fatol, maxiter=cfg.simplex_maxiter,
                                         initial_simplex=np.array(simplex)))
    u = np.clip(res.x, 0.0, 1.0)
    f = obj(u)
    if f <= obj(u0):
        return u, f
    return u0, obj(u0)


def _starting_points(cfg: SmmConfig, base: dict) -> np.ndarray:
    lo, hi = cfg.lower, cfg.upper
    first = np.array([(base[n] - l) / (h - l) for n, l, h in zip(cfg.free, lo, hi)])
    if cfg.n_starts <= 1:
        return first[None, :]
    lhs = qmc.LatinHypercube(d=len(cfg.free), seed=cfg.seed).random(cfg.n_starts - 1)
    return np.vstack([first, lhs])


def minimize(fn, cfg: SmmConfig, base: dict | None = None) -> ParamEstimate:
    """Run the annealing / simplex hybrid on ``fn(values: dict) -> loss``."""
    base = dict(cfg.start or {}) if base is None else {**base, **(cfg.start or {})}
    for n in cfg.free:
        base.setdefault(n, 0.5 * sum(cfg.bounds[n]))
    obj = _Objective(fn, cfg.lower, cfg.upper, list(cfg.free), cfg.max_evals)
    messages, best = [], (np.inf, None)
    converged_any = False
    try:
        for si, u0 in enumerate(_starting_points(cfg, base)):
            obj.start = si
            rng = np.random.default_rng([cfg.seed, si])
            u_start = np.clip(u0, 0.0, 1.0)
            converged = False
            for cycle in range(cfg.max_cycles):
                ua, _ = _anneal(obj, u_start, cfg, rng)
                us, fs = _simplex(obj, ua, cfg)
                if fs < best[0] or best[1] is None:
                    best = (fs, us)
                if np.max(np.abs(us - u_start)) <= cfg.cycle_tol:
                    converged = True
                    break
                u_start = us
            converged_any |= converged
            log.info("start %d: loss %.6g converged=%s", si, obj(best[1]), converged)
    except _Budget:
        msg = f"evaluation budget of {cfg.max_evals} exhausted; returning the best incumbent"
        warnings.warn(msg, stacklevel=2)
        messages.append(msg)
        if best[1] is None and obj.rows:
            r = min(obj.rows, key=lambda r: r["loss"])
            best = (r["loss"], (np.array([r[n] for n in cfg.free]) - cfg.lower) / (cfg.upper - cfg.lower))
    x = obj.to_x(best[1])
    trace = pd.DataFrame(obj.rows)
    return ParamEstimate(dict(zip(cfg.free, map(float, x))), float(best[0]), trace, None,
                         converged_any and not messages, len(obj.cache), messages=messages)


def moment_objective(inputs: ModelInputs, data_moments: pd.DataFrame, cfg: SmmConfig,
                     initial: InitialDistribution | None = None):
    """Loss as a function of the free parameters (others from ``inputs.params``)."""
    weights = diagonal_weights(data_moments) if cfg.weighting == "diagonal" else None

    def fn(values: dict) -> float:
        params = set_params(inputs.params, values)  # raises ValueError on invalid values
        sol = solve(inputs.with_params(params))
        sim = compute_moments(simulate_histories(sol, cfg.n_histories, cfg.sim_seed, initial))
        return loss(sim, data_moments, weights)

    return fn


def estimate(cfg: SmmConfig, data_moments: pd.DataFrame, inputs: ModelInputs,
             initial: InitialDistribution | None = None) -> ParamEstimate:
    """SMM estimate of ``cfg.free``; other parameters stay at ``inputs.params``."""
    base = {n: get_param(inputs.params, n) for n in cfg.free}
    for n in cfg.free:
        lo, hi = cfg.bounds[n]
        base[n] = min(max(base[n], lo), hi)
    est = minimize(moment_objective(inputs, data_moments, cfg, initial), cfg, base)
    params = set_params(inputs.params, est.values)
    sol = solve(inputs.with_params(params))
    sim = compute_moments(simulate_histories(sol, cfg.n_histories, cfg.sim_seed, initial))
    fit = data_moments[["moment_id", "kind", "age", "quartile", "value"]].rename(columns={"value": "data"})
    fit["simulated"] = sim.set_index("moment_id")["value"].reindex(fit["moment_id"]).to_numpy()
    fit["difference"] = fit["simulated"] - fit["data"]
    weights = diagonal_weights(data_moments) if cfg.weighting == "diagonal" else None
    _, est.n_skipped = loss(sim, data_moments, weights, return_skipped=True)
    if est.n_skipped:
        log.info("%d moment cells missing and skipped", est.n_skipped)
    est.fit = fit
    est.params = params
    return est
