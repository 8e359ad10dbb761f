"""Command-line pipeline: synthetic data, process estimation, model solution and experiments.

Every subcommand writes into ``<output_dir>/<subcommand>/`` and leaves a
``manifest.json`` listing its inputs and outputs with SHA-256 hashes, the
seed and the wall time. A subcommand whose inputs, configuration and
outputs all still match its manifest is skipped unless ``--force`` is set.

Configuration is an INI file whose ``[section]`` plus ``key`` give flat
dotted keys (``model.grid``); ``--set key=value`` overrides any of them.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import shutil
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (ConfigError, DependencyError, HealthDynError, IdentificationError,
                     InsufficientDataError, LoadError, NumericalError, SeparationError,
                     SingularDesignError)
from .io import file_sha256, parse_float_list, read_keyed, write_frame, write_keyed

log = logging.getLogger("healthdyn")

EXIT_OK, EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_NUMERICAL = 0, 2, 3, 4
OUTPUT_ENV = "HEALTHDYN_OUTPUT_DIR"
REQUIRED = object()

DEFAULT_BOUNDS = {"gamma": (0.2, 0.6), "phi_b": (0.0, 0.2), "K": (1e4, 2e6),
                  "phi_h1": (0.0, 4870.0), "phi_h2": (0.0, 4870.0), "phi_h3": (0.0, 4870.0),
                  "phi_h4": (0.0, 4870.0), "phi_w1": (0.0, 4870.0), "phi_w2": (0.0, 200.0),
                  "phi_w3": (0.0, 50.0)}

# key -> (type, default)
SCHEMA = {
    "run.seed": (int, REQUIRED),
    "run.variant": (str, "nonlinear"),
    "run.output_dir": (str, "out"),
    "data.n_persons": (int, 20_000),
    "data.n_waves": (int, 6),
    "index.link": (str, "probit"),
    "health.n_paths": (int, 60_000),
    "health.bias_correction": (bool, True),
    "earnings.min_age": (int, 50),
    "wealth.order": (int, 3),
    "wealth.cohort": (str, "1946-1955"),
    "model.grid": (str, "full"),
    "model.params_file": (str, ""),
    "estimate.free": (str, "gamma"),
    "estimate.weighting": (str, "identity"),
    "estimate.n_histories": (int, 15_000),
    "estimate.n_starts": (int, 5),
    "estimate.max_cycles": (int, 4),
    "estimate.max_evals": (int, 20_000),
    "estimate.data_moments": (str, ""),
    "simulate.n_histories": (int, 15_000),
    "shock.tau_init": (float, 0.1),
    "shock.tau_shocks": (list, "0.1,0.5,0.9"),
    "shock.assets": (float, 10_000.0),
    "shock.n_histories": (int, 15_000),
    "decompose.percentiles": (list, "0.75"),
    "decompose.n_histories": (int, 15_000),
    "wtp.tau_init": (list, "0.1"),
    "wtp.tau_shocks": (list, "0.1,0.3,0.5,0.7,0.9"),
    "wtp.assets": (list, "10000"),
    "inequality.n_histories": (int, 15_000),
    "inequality.earnings_age": (int, 65),
}
SCHEMA.update({f"estimate.bounds.{k}": (list, ",".join(map(repr, v))) for k, v in DEFAULT_BOUNDS.items()})

DEPENDS = {
    "gen-data": (),
    "fit-index": ("gen-data",),
    "fit-health": ("gen-data", "fit-index"),
    "fit-earnings": ("gen-data", "fit-index"),
    "fit-wealth": ("gen-data",),
    "solve": ("fit-health", "fit-earnings"),
    "estimate": ("gen-data", "fit-index", "fit-health", "fit-earnings"),
    "simulate": ("solve",),
    "shock": ("solve",),
    "decompose": ("solve",),
    "wtp": ("solve",),
    "inequality": ("solve",),
    "report": (),
}


# configuration ------------------------------------------------------------------

def _coerce(key: str, raw):
    kind, _ = SCHEMA[key]
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if kind is bool:
            if isinstance(raw, bool):
                return raw
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is list:
            return tuple(float(v) for v in parse_float_list(raw)) if isinstance(raw, str) else tuple(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def load_config(path: str | None = None, overrides=(), environ=os.environ) -> dict:
    """Resolve defaults, the optional INI file and ``key=value`` overrides.

    Precedence: overrides, then the file, then ``$HEALTHDYN_OUTPUT_DIR``
    (output directory only), then defaults.
    """
    raw: dict = {}
    if environ.get(OUTPUT_ENV):
        raw["run.output_dir"] = environ[OUTPUT_ENV]
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read(p, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from None
        for section in cp.sections():
            for key, value in cp.items(section):
                raw[f"{section}.{key}"] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        raw[key.strip()] = value
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    cfg = {}
    for key, (_, default) in SCHEMA.items():
        if key in raw:
            cfg[key] = _coerce(key, raw[key])
        elif default is REQUIRED:
            raise ConfigError(f"{key} is required")
        else:
            cfg[key] = _coerce(key, default) if isinstance(default, str) and SCHEMA[key][0] is list else default
    if cfg["run.variant"] not in ("nonlinear", "canonical"):
        raise ConfigError("run.variant: must be 'nonlinear' or 'canonical'")
    if cfg["model.grid"] not in ("full", "reduced"):
        raise ConfigError("model.grid: must be 'full' or 'reduced'")
    return cfg


# artifacts and manifests ----------------------------------------------------------

class Stage:
    """One subcommand run: records inputs and outputs for the manifest."""

    def __init__(self, name: str, cfg: dict):
        self.name, self.cfg = name, cfg
        self.root = Path(cfg["run.output_dir"])
        self.dir = self.root / name
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []

    def upstream(self, stage: str) -> Path:
        d = self.root / stage
        if not (d / "manifest.json").exists():
            raise DependencyError(f"'{self.name}' needs the output of '{stage}'; run "
                                  f"'healthdyn {stage}' first (no {d / 'manifest.json'})")
        return d

    def use(self, path: Path) -> Path:
        path = Path(path)
        if not path.exists():
            raise LoadError(f"{path}: file not found")
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        self.inputs.extend(files)
        return path

    def out(self, name: str) -> Path:
        return self.dir / name

    def wrote(self, path: Path) -> Path:
        path = Path(path)
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        self.outputs.extend(files)
        return path

    def frame(self, name: str, df: pd.DataFrame) -> Path:
        return self.wrote(write_frame(self.out(name), df))

    def keyed(self, name: str, fmt: str, values: dict) -> Path:
        return self.wrote(write_keyed(self.out(name), fmt, values))


def _hashes(paths, root: Path) -> list:
    return [{"path": str(p.relative_to(root)) if p.is_relative_to(root) else str(p), "sha256": file_sha256(p)}
            for p in paths]


def _config_digest(cfg: dict) -> str:
    import hashlib

    return hashlib.sha256(json.dumps({k: v for k, v in cfg.items() if k != "run.output_dir"},
                                     sort_keys=True, default=list).encode()).hexdigest()


def write_manifest(stage: Stage, extra_args: dict, wall: float, warnings_seen: list) -> Path:
    manifest = {"subcommand": stage.name, "format": "manifest_v1", "seed": stage.cfg["run.seed"],
                "arguments": extra_args, "config_sha256": _config_digest(stage.cfg),
                "inputs": _hashes(stage.inputs, stage.root), "outputs": _hashes(stage.outputs, stage.root),
                "wall_time_s": round(wall, 3), "warnings": warnings_seen}
    path = stage.dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def up_to_date(name: str, cfg: dict, extra_args: dict) -> bool:
    """True when the previous run's config, inputs and outputs all still hash the same."""
    root = Path(cfg["run.output_dir"])
    path = root / name / "manifest.json"
    if not path.exists():
        return False
    m = json.loads(path.read_text(encoding="utf-8"))
    if m.get("config_sha256") != _config_digest(cfg) or m.get("arguments") != extra_args:
        return False
    for entry in m["inputs"] + m["outputs"]:
        p = root / entry["path"] if not Path(entry["path"]).is_absolute() else Path(entry["path"])
        if not p.exists() or file_sha256(p) != entry["sha256"]:
            return False
    return True


# shared loaders ---------------------------------------------------------------------

def _panel(st: Stage):
    from .panel_data import load_panel

    d = st.upstream("gen-data")
    return load_panel(st.use(d / "panel.csv"))


def _panel_with_health(st: Stage) -> pd.DataFrame:
    panel = _panel(st)
    idx = pd.read_csv(st.use(st.upstream("fit-index") / "health_index.csv"))
    return panel.data.merge(idx[["person_id", "wave", "h_index", "h"]], on=["person_id", "wave"], how="left")


def _grid(cfg: dict, variant: str):
    from .lifecycle import StateGrid
    from .synthetic import reduced_grid

    return reduced_grid() if cfg["model.grid"] == "reduced" else StateGrid.for_variant(variant)


def _model_inputs(st: Stage, params_file: str | None = None):
    from .earnings import EarningsProcess
    from .health_dynamics.discrete import DiscreteHealthProcess
    from .lifecycle import ModelInputs, ModelParams
    from .mortality import MortalityTable
    from .synthetic import params_for

    hdir, edir = st.upstream("fit-health"), st.upstream("fit-earnings")
    info = read_keyed(st.use(hdir / "health.txt"), "health_v1")
    variant = info["variant"]
    proc = DiscreteHealthProcess.load(st.use(hdir / "process"))
    mort = MortalityTable.load(st.use(hdir / "mortality.csv"))
    earn = EarningsProcess.load(st.use(edir / "earnings.txt"))
    grid = _grid(st.cfg, variant)
    if proc.n_eta != grid.n_eta or proc.n_eps != grid.n_eps:
        raise DependencyError(f"'fit-health' output has {proc.n_eta} persistent nodes but model.grid="
                              f"{st.cfg['model.grid']} needs {grid.n_eta}; re-run 'healthdyn fit-health'")
    pf = st.cfg["model.params_file"] if params_file is None else params_file
    params = ModelParams.load(st.use(pf)) if pf else params_for(proc, variant, mort)
    return ModelInputs(params=params, health=proc, earnings=earn, mortality=mort, grid=grid), variant


def _solution(st: Stage):
    from .lifecycle import Solution

    sdir = st.upstream("solve")
    inputs, variant = _model_inputs(st, params_file=str(sdir / "params.txt"))
    return Solution.load(st.use(sdir / "solution"), inputs), inputs


def _health_quantile(st: Stage):
    """Conditional quantile function of the fitted persistent component."""
    from .health_dynamics.canonical import CanonicalParams
    from .health_dynamics.quantile import QuantileTable

    hdir = st.upstream("fit-health")
    info = read_keyed(st.use(hdir / "health.txt"), "health_v1")
    if info["variant"] == "nonlinear":
        return QuantileTable.load(st.use(hdir / "quantile_table"))
    raw = read_keyed(st.use(hdir / "canonical.txt"), "canonical_v1")
    return CanonicalParams(**{k: float(v) for k, v in raw.items()})


# subcommands --------------------------------------------------------------------------

def cmd_gen_data(st: Stage, args) -> None:
    from .panel_data import SynthConfig, generate_panel, panel_summary

    cfg = st.cfg
    sc = SynthConfig(n_persons=cfg["data.n_persons"], n_waves=cfg["data.n_waves"], seed=cfg["run.seed"],
                     health_process=cfg["run.variant"])
    panel = generate_panel(sc)
    panel.save(st.out("panel.csv"), st.out("panel_truth.csv"))
    st.wrote(st.out("panel.csv"))
    st.wrote(st.out("panel_truth.csv"))
    st.frame("panel_summary.csv", panel_summary(panel).reset_index(names="statistic"))


def cmd_fit_index(st: Stage, args) -> None:
    from .health_index import fit_latent_index, predict_index, residualize

    panel = _panel(st)
    model = fit_latent_index(panel, link=st.cfg["index.link"])
    model.save(st.out("index.txt"))
    st.wrote(st.out("index.txt"))
    idx = predict_index(model, panel)
    resid = residualize(idx, panel.data)
    df = panel.data[["person_id", "wave", "age"]].assign(h_index=idx.to_numpy(), h=resid.to_numpy())
    st.frame("health_index.csv", df)


def _bi_ages(grid) -> np.ndarray:
    return np.arange(grid.first_age, grid.last_age, 2)


def cmd_fit_health(st: Stage, args) -> None:
    from .health_dynamics.canonical import estimate_canonical
    from .health_dynamics.discrete import annualize, discretize, mortality_bias_correction
    from .health_dynamics.quantile import (estimate_quantile_table, persistence, simulate_generator,
                                           simulate_nonlinear)
    from .mortality import default_lifetable, estimate_mortality, health_cutoffs, rescale_to_lifetable

    cfg = st.cfg
    variant = args.variant or cfg["run.variant"]
    grid = _grid(cfg, variant)
    df = _panel_with_health(st)
    resid = pd.DataFrame({"person_id": df["person_id"], "period": (df["age"] - 50) // 2, "h": df["h"]}).dropna()
    fit = estimate_canonical(resid)
    st.keyed("canonical.txt", "canonical_v1", fit.params.as_dict())
    st.frame("canonical_moments.csv", fit.moments)
    s2_eps = fit.params.sigma2_eps
    bi = _bi_ages(grid)
    seed = cfg["run.seed"]
    n_paths = cfg["health.n_paths"]
    if variant == "canonical":
        paths = simulate_generator(fit.params, n_paths, bi.size, seed=seed)
    else:
        # persistent components from the generator sidecar, rescaled to index units
        truth = pd.read_csv(st.use(st.upstream("gen-data") / "panel_truth.csv"))
        scale = np.sqrt(max(np.nanvar(df["h"]) - s2_eps, 1e-12)) / truth["eta"].std()
        wide = truth.pivot(index="person_id", columns="wave", values="eta").to_numpy() * scale
        qt = estimate_quantile_table(wide, pool=True)
        qt.save(st.out("quantile_table"))
        st.wrote(st.out("quantile_table"))
        ranks = np.linspace(0.1, 0.9, 9)
        eta_pts = np.quantile(wide[np.isfinite(wide)], ranks)
        rows = [(r, t, float(persistence(qt, e, t))) for r, e in zip(ranks, eta_pts) for t in ranks]
        st.frame("persistence.csv", pd.DataFrame(rows, columns=["eta_rank", "tau", "persistence"]))
        paths = simulate_nonlinear(qt, n_paths, bi.size - 1, seed=seed).paths
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        proc = annualize(discretize(paths, s2_eps, n_eta=grid.n_eta, n_eps=grid.n_eps, ages=bi))
        raw = estimate_mortality(df, health="h")
    lt = default_lifetable(proc.ages)
    mort = rescale_to_lifetable(raw, lt, ages=proc.ages, cutoffs=health_cutoffs(proc))
    info = {"variant": variant, "n_eta": grid.n_eta, "n_eps": grid.n_eps, "sigma2_eps": s2_eps}
    if cfg["health.bias_correction"]:
        bc = mortality_bias_correction(proc, mort)
        proc = bc.process
        mort = rescale_to_lifetable(raw, lt, ages=proc.ages, cutoffs=health_cutoffs(proc))
        info.update(bias_iterations=bc.iterations, bias_converged=bc.converged, bias_max_gap=bc.max_gap)
    proc.save(st.out("process"))
    st.wrote(st.out("process"))
    mort.save(st.out("mortality.csv"))
    st.wrote(st.out("mortality.csv"))
    st.frame("raw_mortality.csv", raw.table)
    st.keyed("health.txt", "health_v1", info)


def cmd_fit_earnings(st: Stage, args) -> None:
    from .earnings import estimate_earnings_process

    df = _panel_with_health(st)
    fit = estimate_earnings_process(df, health="h", min_age=st.cfg["earnings.min_age"])
    fit.process.save(st.out("earnings.txt"))
    st.wrote(st.out("earnings.txt"))
    st.frame("earnings_moments.csv", fit.moments)


def cmd_fit_wealth(st: Stage, args) -> None:
    from .panel_data import HOUSE_PRICES
    from .wealth_profile import deflate_housing, fit_wealth_profile, simulate_profile

    panel = _panel(st)
    data = deflate_housing(panel.data, pd.Series(HOUSE_PRICES))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit_wealth_profile(data, order=st.cfg["wealth.order"], reference_cohort=st.cfg["wealth.cohort"])
    st.keyed("wealth.txt", "wealth_v1", {"age_coef": model.age_coef, "pi_u": model.pi_u,
                                         "reference_cohort": model.reference_cohort,
                                         "dropped_persons": model.dropped_single_wave})
    st.frame("wealth_profile.csv", simulate_profile(model, st.cfg["wealth.cohort"]))
    st.frame("cohort_effects.csv", model.cohort_means.rename_axis("cohort").reset_index(name="mean_effect"))


def cmd_solve(st: Stage, args) -> None:
    from .lifecycle import solve

    inputs, variant = _model_inputs(st)
    sol = solve(inputs)
    inputs.params.save(st.out("params.txt"))
    st.wrote(st.out("params.txt"))
    sol.save(st.out("solution"))
    st.wrote(st.out("solution"))


def cmd_estimate(st: Stage, args) -> None:
    from .panel_data import HOUSE_PRICES
    from .smm import PARAM_NAMES, SmmConfig, data_moments, estimate
    from .wealth_profile import deflate_housing

    cfg = st.cfg
    free = tuple(s.strip() for s in cfg["estimate.free"].split(",") if s.strip())
    bad = [f for f in free if f not in PARAM_NAMES]
    if bad or not free:
        raise ConfigError(f"estimate.free: unknown parameter(s) {bad}")
    bounds = {}
    for name in free:
        b = cfg[f"estimate.bounds.{name}"]
        if len(b) != 2:
            raise ConfigError(f"estimate.bounds.{name}: expected 'lo,hi'")
        bounds[name] = tuple(b)
    inputs, _ = _model_inputs(st)
    smm = SmmConfig(free=free, bounds=bounds, weighting=cfg["estimate.weighting"],
                    n_histories=cfg["estimate.n_histories"], sim_seed=cfg["run.seed"], seed=cfg["run.seed"],
                    n_starts=cfg["estimate.n_starts"], max_cycles=cfg["estimate.max_cycles"],
                    max_evals=cfg["estimate.max_evals"], time_endowment=inputs.params.L)
    if cfg["estimate.data_moments"]:
        data = pd.read_csv(st.use(cfg["estimate.data_moments"]))
        if "kind" not in data:
            data["kind"] = data["moment_id"].str.split("_").str[0]
    else:
        df = deflate_housing(_panel_with_health(st), pd.Series(HOUSE_PRICES))
        data = data_moments(df, health="h")
    st.frame("data_moments.csv", data)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = estimate(smm, data, inputs)
    for w in caught:
        log.warning("%s", w.message)
    est.params.save(st.out("params.txt"))
    st.wrote(st.out("params.txt"))
    st.frame("trace.csv", est.trace)
    st.frame("fit.csv", est.fit)
    st.keyed("estimate.txt", "estimate_v1", {**est.values, "loss": est.loss, "converged": est.converged,
                                             "n_evals": est.n_evals, "n_skipped": est.n_skipped})


def _moments_frame(hist) -> pd.DataFrame:
    from .simulation import compute_moments

    return compute_moments(hist)[["moment_id", "age", "quartile", "value"]]


def cmd_simulate(st: Stage, args) -> None:
    from .simulation import simulate_histories

    sol, _ = _solution(st)
    hist = simulate_histories(sol, st.cfg["simulate.n_histories"], st.cfg["run.seed"])
    st.frame("moments.csv", _moments_frame(hist))
    rows = []
    for t, age in enumerate(hist.ages):
        m = hist.alive[:, t]
        w = m & (hist.s[:, t] > 0)
        rows.append({"age": int(age), "alive": m.mean(), "assets": hist.a[m, t].mean(),
                     "consumption": hist.c[m, t].mean(), "employment": w.sum() / max(m.sum(), 1),
                     "hours": hist.s[w, t].mean() if w.any() else np.nan,
                     "health": hist.h[m, t].mean()})
    st.frame("profiles.csv", pd.DataFrame(rows))
    st.keyed("simulate.txt", "simulate_v1", {"n_histories": hist.n, "clamped": int(np.sum(hist.clamped)),
                                             "max_budget_residual": float(np.nanmax(np.abs(hist.budget_residual())))})


def cmd_shock(st: Stage, args) -> None:
    from .simulation import ShockExperiment, counterfactual_shock

    cfg = st.cfg
    tau_init = cfg["shock.tau_init"] if args.tau_init is None else args.tau_init
    shocks = cfg["shock.tau_shocks"] if not args.tau_shock else tuple(args.tau_shock)
    assets = cfg["shock.assets"] if args.assets is None else args.assets
    arms = tuple(sorted(set(shocks) | {0.5}))
    try:
        exp = ShockExperiment(tau_init=tau_init, tau_shocks=arms, assets=assets,
                              n_histories=cfg["shock.n_histories"], seed=cfg["run.seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sol, _ = _solution(st)
    res = counterfactual_shock(exp, sol, quantile=_health_quantile(st))
    st.frame("diff_profiles.csv", res.diffs)
    st.frame("level_profiles.csv", res.levels)
    st.frame("cov_ratio.csv", res.cov)
    st.frame("nodes.csv", res.nodes)


def cmd_decompose(st: Stage, args) -> None:
    from .lifecycle import CHANNELS, solve
    from .simulation import decompose_channels, outcomes, simulate_histories

    cfg = st.cfg
    sdir = st.upstream("solve")
    inputs, _ = _model_inputs(st, params_file=str(sdir / "params.txt"))
    n, seed = cfg["decompose.n_histories"], cfg["run.seed"]
    baseline = outcomes(simulate_histories(solve(inputs), n, seed))
    frames = []
    for pct in cfg["decompose.percentiles"]:
        for chans in [(c,) for c in CHANNELS] + [CHANNELS]:
            out = decompose_channels(inputs, chans, pct, n=n, seed=seed, baseline=baseline)
            frames.append(out if not frames else out.iloc[1:])
    st.frame("decomp.csv", pd.concat(frames, ignore_index=True))


def cmd_wtp(st: Stage, args) -> None:
    from .simulation import willingness_to_pay

    cfg = st.cfg
    sol, _ = _solution(st)
    q = _health_quantile(st)
    rows = []
    for ti in cfg["wtp.tau_init"]:
        for a0 in cfg["wtp.assets"]:
            for ts in cfg["wtp.tau_shocks"]:
                r = willingness_to_pay(ti, ts, a0, sol, quantile=q)
                rows.append({"tau_init": ti, "assets": a0, "tau_shock": ts, "wtp": r.wtp, "clamped": r.clamped,
                             "init_rank": r.init_rank, "shock_rank": r.shock_rank})
    st.frame("wtp.csv", pd.DataFrame(rows))


def cmd_inequality(st: Stage, args) -> None:
    from .simulation import inequality_metrics, simulate_histories

    sol, _ = _solution(st)
    hist = simulate_histories(sol, st.cfg["inequality.n_histories"], st.cfg["run.seed"])
    tab = inequality_metrics(hist, st.cfg["inequality.earnings_age"])
    st.frame("inequality.csv", tab.summary)
    st.frame("inequality_by_age.csv", tab.by_age)


#: report name -> (subcommand, file)
REPORT_ITEMS = {
    "panel_summary": ("gen-data", "panel_summary.csv"),
    "canonical_health_process": ("fit-health", "canonical.txt"),
    "canonical_moment_fit": ("fit-health", "canonical_moments.csv"),
    "persistence_surface": ("fit-health", "persistence.csv"),
    "mortality_by_health": ("fit-health", "mortality.csv"),
    "earnings_process": ("fit-earnings", "earnings.txt"),
    "wealth_profile": ("fit-wealth", "wealth_profile.csv"),
    "model_parameters": ("solve", "params.txt"),
    "estimated_parameters": ("estimate", "params.txt"),
    "moment_fit": ("estimate", "fit.csv"),
    "estimation_trace": ("estimate", "trace.csv"),
    "simulated_moments": ("simulate", "moments.csv"),
    "life_cycle_profiles": ("simulate", "profiles.csv"),
    "shock_profiles": ("shock", "diff_profiles.csv"),
    "asset_dispersion_ratio": ("shock", "cov_ratio.csv"),
    "channel_decomposition": ("decompose", "decomp.csv"),
    "willingness_to_pay": ("wtp", "wtp.csv"),
    "inequality": ("inequality", "inequality.csv"),
    "inequality_by_age": ("inequality", "inequality_by_age.csv"),
}


def _keyed_to_frame(path: Path) -> pd.DataFrame:
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    pairs = [ln.split("=", 1) for ln in lines if "=" in ln]
    return pd.DataFrame({"key": [k.strip() for k, _ in pairs], "value": [v.strip() for _, v in pairs]})


def cmd_report(st: Stage, args) -> None:
    rows = []
    for name, (stage, fname) in REPORT_ITEMS.items():
        src = st.root / stage / fname
        if not src.exists():
            rows.append({"item": name, "subcommand": stage, "file": "", "status": "missing", "sha256": ""})
            continue
        st.use(src)
        dst = st.out(f"{name}.csv")
        dst.parent.mkdir(parents=True, exist_ok=True)
        if src.suffix == ".txt":
            write_frame(dst, _keyed_to_frame(src))
        else:
            shutil.copyfile(src, dst)
        st.wrote(dst)
        rows.append({"item": name, "subcommand": stage, "file": dst.name, "status": "ok",
                     "sha256": file_sha256(dst)})
    st.frame("index.csv", pd.DataFrame(rows))


COMMANDS = {
    "gen-data": cmd_gen_data, "fit-index": cmd_fit_index, "fit-health": cmd_fit_health,
    "fit-earnings": cmd_fit_earnings, "fit-wealth": cmd_fit_wealth, "solve": cmd_solve,
    "estimate": cmd_estimate, "simulate": cmd_simulate, "shock": cmd_shock, "decompose": cmd_decompose,
    "wtp": cmd_wtp, "inequality": cmd_inequality, "report": cmd_report,
}


# entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
    common.add_argument("--out", help="shorthand for --set run.output_dir=DIR")
    common.add_argument("--threads", type=int, default=0, help="worker threads (0 = all available)")
    common.add_argument("--force", action="store_true", help="re-run even if outputs are up to date")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="healthdyn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "fit-health":
            g = p.add_mutually_exclusive_group()
            g.add_argument("--canonical", dest="variant", action="store_const", const="canonical")
            g.add_argument("--nonlinear", dest="variant", action="store_const", const="nonlinear")
        if name == "shock":
            p.add_argument("--tau-init", type=float)
            p.add_argument("--tau-shock", type=float, action="append")
            p.add_argument("--assets", type=float)
    return parser


def set_threads(n: int) -> int:
    import numba

    if n < 0:
        raise ConfigError("--threads must be >= 0")
    limit = numba.config.NUMBA_NUM_THREADS
    n = limit if n == 0 else min(n, limit)
    numba.set_num_threads(n)
    return n


def _extra_args(args) -> dict:
    return {k: getattr(args, k) for k in ("variant", "tau_init", "tau_shock", "assets") if hasattr(args, k)}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"run.seed={args.seed}")
        if args.out:
            overrides.append(f"run.output_dir={args.out}")
        cfg = load_config(args.config, overrides)
        set_threads(args.threads)
        extra = _extra_args(args)
        if not args.force and up_to_date(args.command, cfg, extra):
            print(f"{args.command}: up to date")
            return EXIT_OK
        st = Stage(args.command, cfg)
        for dep in DEPENDS[args.command]:
            st.upstream(dep)
        if st.dir.exists():
            shutil.rmtree(st.dir)
        st.dir.mkdir(parents=True)
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            COMMANDS[args.command](st, args)
        seen = sorted({str(w.message) for w in caught})
        for msg in seen:
            log.warning("%s", msg)
        write_manifest(st, extra, time.perf_counter() - t0, seen)
        print(f"{args.command}: wrote {len(st.outputs)} file(s) to {st.dir}")
        return EXIT_OK
    except (ConfigError, LoadError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (NumericalError, IdentificationError, SingularDesignError, SeparationError,
            InsufficientDataError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HealthDynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
