"""Acceptance criteria, one test each.

Every test records a ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line; the lines are repeated in the terminal summary. Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import hashlib
import os
import shutil
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from healthdyn.earnings import WAGE_DEFAULTS, EarningsProcess, estimate_earnings_process, simulate_wage_panel
from healthdyn.health_dynamics import (CanonicalParams, KinkedQuantileProcess, annualize, canonical_moments,
                                       discretize, estimate_canonical, estimate_quantile_table,
                                       mortality_bias_correction, persistence, simulate_canonical,
                                       simulate_generator, survivor_medians)
from healthdyn.health_dynamics.canonical import paths_to_panel
from healthdyn.lifecycle import solve
from healthdyn.mortality import default_lifetable, rescale_to_lifetable
from healthdyn.simulation import (ShockExperiment, compute_moments, counterfactual_shock, decompose_channels,
                                  outcomes, simulate_histories, willingness_to_pay)
from healthdyn.smm import SmmConfig, estimate
from healthdyn.synthetic import (health_generator, reduced_grid, synthetic_health, synthetic_inputs,
                                 synthetic_mortality)

from oracles import backward_values, enumerate_paths, tiny_inputs

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []


def record(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def full():
    """Full-grid inputs and solutions for both health variants."""
    out = {}
    for variant in ("nonlinear", "canonical"):
        inp = synthetic_inputs(variant)
        out[variant] = (inp, solve(inp))
    return out


def test_c01_canonical_recovery():
    t0 = time.perf_counter()
    truth = CanonicalParams.defaults()
    h, _ = simulate_canonical(truth, 50_000, 5, seed=2024)
    fit = estimate_canonical(paths_to_panel(h))
    wall = time.perf_counter() - t0
    p = fit.params
    errs = {"rho": abs(p.rho - truth.rho)}
    errs.update({k: abs(getattr(p, k) - getattr(truth, k)) for k in ("sigma2_nu", "sigma2_eps", "sigma2_0")})
    ok = errs["rho"] <= 0.02 and all(errs[k] <= 0.03 for k in errs if k != "rho") and wall < 120
    record(1, ok, "canonical recovery |err| " + ", ".join(f"{k}={v:.4f}" for k, v in errs.items())
           + f"; {wall:.1f}s")


def test_c02_earnings_recovery():
    t0 = time.perf_counter()
    fit = estimate_earnings_process(simulate_wage_panel(EarningsProcess(), 50_000, seed=2024))
    wall = time.perf_counter() - t0
    errs = {k: abs(getattr(fit.process, k) - v) for k, v in WAGE_DEFAULTS.items()}
    ok = max(errs.values()) <= 0.03 and wall < 120
    record(2, ok, "earnings recovery |err| " + ", ".join(f"{k}={v:.4f}" for k, v in errs.items())
           + f"; {wall:.1f}s")


def test_c03_moment_formula_oracle():
    p = CanonicalParams.defaults()
    n = 1_000_000
    h, _ = simulate_canonical(p, n, 5, seed=7)
    h = h - h.mean(axis=0)
    z = {}
    for den in ("standard", "printed"):
        m = canonical_moments(p, 5, denominator=den)
        prods = np.stack([h[:, t] * h[:, t - lag] for t, lag in zip(m.t, m.lag)])
        z[den] = (prods.mean(axis=1) - m.value.to_numpy()) / (prods.std(axis=1) / np.sqrt(n))
    # the two forms differ only in the geometric sum of past innovations
    m_s = canonical_moments(p, 5, denominator="standard")
    m_p = canonical_moments(p, 5, denominator="printed")
    k = (m_s.t - m_s.lag).to_numpy()
    geo = p.rho ** m_s.lag.to_numpy() * p.sigma2_nu * (1 - p.rho ** (2 * k)) / (1 - p.rho**2)
    shift = geo * ((1 - p.rho**2) / (1 + p.rho**2) - 1)
    isolated = np.allclose(m_p.value.to_numpy() - m_s.value.to_numpy(), shift, rtol=1e-12, atol=1e-15)
    clean = k == 0
    ok = np.abs(z["standard"]).max() < 3 and isolated and np.abs(z["printed"][clean]).max() < 3
    record(3, ok, f"standard form max |z|={np.abs(z['standard']).max():.2f} over {len(m_s)} moments; "
                  f"(1+rho^2) form max |z|={np.abs(z['printed']).max():.0f}, all of it explained by the "
                  f"(1-rho^2)/(1+rho^2) factor on the innovation sum (isolated={isolated})")


def test_c04_ar1_embedding():
    rho, s2 = 0.953, 0.084
    r = np.random.default_rng(11)
    prev = r.normal(0, np.sqrt(s2 / (1 - rho**2)), 1_000_000)
    nxt = rho * prev + np.sqrt(s2) * r.standard_normal(prev.size)
    qt = estimate_quantile_table(np.column_stack([prev, nxt]))
    g = qt.eta_grids[0]
    E, T = np.meshgrid(g[1:-1], qt.tau_grid, indexing="ij")
    surf = persistence(qt, E, T)
    spread, level = surf.max() - surf.min(), surf.mean()
    record(4, spread < 0.05 and abs(level - rho) <= 0.02,
           f"AR(1) persistence surface spread {spread:.4f}, level {level:.4f} (rho {rho})")


def test_c05_kinked_persistence_shape():
    gen = KinkedQuantileProcess()
    paths = simulate_generator(gen, 1_000_000, 2, seed=5)
    grid = np.quantile(paths[:, 0], np.linspace(0.025, 0.975, 15))
    qt = estimate_quantile_table(paths, eta_grid=grid)
    e10 = float(np.quantile(paths[:, 0], 0.1))
    gap = float(persistence(qt, e10, 0.1) - persistence(qt, e10, 0.9))
    truth = float(gen.slope(e10, 0.1) - gen.slope(e10, 0.9))
    record(5, gap > 0.2 and abs(gap - truth) <= 0.1,
           f"persistence gap at the 10th percentile of eta: estimated {gap:.3f}, true {truth:.3f}")


def test_c06_discretization_algebra():
    worst_row, ident_ok, compose_ok = 0.0, True, True
    for variant, n_eta in (("nonlinear", 19), ("canonical", 24)):
        gen = health_generator(variant)
        paths = simulate_generator(gen, 60_000, 18, seed=0)
        bi = discretize(paths, gen.transitory_variance, n_eta=n_eta, ages=np.arange(50, 85, 2))
        an = annualize(bi)
        worst_row = max(worst_row, np.abs(bi.trans.sum(axis=2) - 1).max(), np.abs(an.trans.sum(axis=2) - 1).max())
        eye = np.eye(n_eta)
        for k in range(an.trans.shape[0]):
            if an.identity_steps[k]:
                ident_ok &= bool(np.array_equal(an.trans[k], eye))
            else:
                compose_ok &= bool(np.array_equal(an.trans[k - 1] @ an.trans[k], bi.trans[k // 2]))
        ident_ok &= int(an.identity_steps.sum()) == bi.ages.size
    record(6, worst_row <= 1e-12 and ident_ok and compose_ok,
           f"max row-sum error {worst_row:.1e}; identity steps exact={ident_ok}; pairs compose exactly={compose_ok}")


def test_c07_mortality():
    ages = np.arange(50, 86)
    raw = np.random.default_rng(3).uniform(0.002, 0.08, (ages.size, 4))
    tab = rescale_to_lifetable(raw, default_lifetable(ages), ages=ages)
    err = np.abs(tab.weighted_rate() - tab.lifetable).max()
    proc = synthetic_health("nonlinear")
    mort = synthetic_mortality(proc)
    target = survivor_medians(proc, lambda age, h: np.zeros_like(h))
    res = mortality_bias_correction(proc, mort)
    gap = np.abs(survivor_medians(res.process, mort.death_prob) - target).max()
    ok = err <= 1e-10 and res.converged and res.iterations <= 50 and gap <= 1e-3
    record(7, ok, f"life-table error {err:.1e}; bias correction converged={res.converged} in "
                  f"{res.iterations} iterations, survivor-median gap {gap:.1e}")


def _cells(v, ref, axis):
    """Largest |v - ref| in units of the smaller neighbouring asset-cell value gap."""
    gap = np.abs(np.diff(ref, axis=axis))
    first = np.take(gap, [0], axis=axis)
    last = np.take(gap, [-1], axis=axis)
    local = np.minimum(np.concatenate([first, gap], axis=axis), np.concatenate([gap, last], axis=axis))
    return float((np.abs(v - ref) / local).max())


def test_c08_solver_correctness(full):
    worst = 0.0
    for first_age in (62, 64, 68):
        inp = tiny_inputs(first_age)
        V_ref = backward_values(inp)
        worst = max(worst, _cells(solve(inp).V, V_ref, axis=1))
    det = tiny_inputs(62, stochastic=False, n_assets=5)
    worst = max(worst, _cells(solve(det).V[0, :, 0, 0, 0, 0], enumerate_paths(det), axis=0))
    inp, sol = full["nonlinear"]
    monotone = bool(np.all(np.diff(sol.V, axis=1) >= 0))
    hist = simulate_histories(sol, 15_000, seed=0)
    budget = float(np.nanmax(np.abs(hist.budget_residual())))
    i, t = np.nonzero(hist.alive)
    phi = sol.tables.phi_h[t, hist.eta[i, t], hist.eps[i, t]]
    time_id = float(np.abs(hist.leisure[i, t] + hist.s[i, t] + phi - inp.params.L).max())
    floor = bool(np.nanmin(hist.c) >= inp.params.c_floor - 1e-9)
    old = hist.ages >= 70
    no_work = bool(np.nanmax(hist.s[:, old]) == 0 and np.all(sol.hours[sol.ages >= 70] == 0))
    ok = worst <= 1 and monotone and budget <= 1e-9 and time_id <= 1e-9 and floor and no_work
    record(8, ok, f"brute-force gap {worst:.1e} asset cells; V monotone={monotone}; budget {budget:.1e}; "
                  f"time {time_id:.1e}; c>=floor={floor}; no work from 70={no_work}")


def test_c09_smm_self_recovery():
    t0 = time.perf_counter()
    inp = synthetic_inputs("nonlinear", grid=reduced_grid())
    data = compute_moments(simulate_histories(solve(inp), 2000, seed=101))
    cfg = SmmConfig(free=("gamma",), bounds={"gamma": (0.2, 0.6)}, start={"gamma": 0.30}, n_histories=2000,
                    sim_seed=7, n_starts=3)
    est = estimate(cfg, data, inp)
    wall = time.perf_counter() - t0
    g = est.values["gamma"]
    record(9, abs(g - 0.378) <= 0.02 and wall <= 1800,
           f"gamma estimate {g:.4f} (truth 0.378), loss {est.loss:.4g}, {est.n_evals} evaluations, {wall:.0f}s")


def test_c10_counterfactual_structure(full):
    res = {}
    for variant in ("nonlinear", "canonical"):
        _, sol = full[variant]
        res[variant] = counterfactual_shock(ShockExperiment(tau_init=0.1), sol, quantile=health_generator(variant))
    zero = all((r.diffs[r.diffs.arm == 0.5].value.fillna(0.0) == 0.0).all() for r in res.values())
    d = res["canonical"].diffs
    H = d[d.variable == "health"].pivot(index="age", columns="arm", values="value")
    asym = float((H[0.1] + H[0.9])[H.index >= 52].abs().mean())
    cell = float(np.diff(full["canonical"][1].tables.eta, axis=1).mean())
    d = res["nonlinear"].diffs
    a85 = d[(d.variable == "assets") & (d.age == 85)].set_index("arm").value
    cov = res["nonlinear"].cov
    ratio = float(cov[(cov.arm == 0.1) & (cov.age == 85)].ratio_to_reference.iloc[0])
    ok = zero and asym < cell and abs(a85[0.1]) > abs(a85[0.9]) and ratio > 1
    record(10, ok, f"median arm zero={zero}; canonical mean |asymmetry| {asym:.4f} < cell {cell:.4f}; "
                   f"nonlinear assets at 85 bad {a85[0.1]:.0f} vs good {a85[0.9]:+.0f}; "
                   f"bad-shock CoV ratio {ratio:.3f}")


def test_c11_decomposition(full):
    inp, sol = full["nonlinear"]
    cf = inp.neutralize(("mortality", "time_cost", "wages"), 0.75)
    cf_sol = solve(cf)
    a = outcomes(simulate_histories(cf_sol, 15_000, seed=0, health_seed=1))
    b = outcomes(simulate_histories(cf_sol, 15_000, seed=0, health_seed=2))
    neutral = a == b
    base = outcomes(simulate_histories(sol, 15_000, seed=0))
    tc = decompose_channels(inp, ("time_cost",), 0.75, baseline=base).iloc[1]
    ok = neutral and tc.pct_employment > 0 and tc.pct_hours > 0
    record(11, ok, f"all channels pinned: invariant to health seed={neutral}; time-cost removal "
                   f"employment {tc.pct_employment:+.2f}%, hours {tc.pct_hours:+.2f}%")


def test_c12_wtp(full):
    inp, sol = full["nonlinear"]
    same = tiny_inputs(62)
    s_same = solve(replace(same, health=replace(same.health, trans=np.tile(np.eye(2), (2, 1, 1)))))
    zero = max(abs(willingness_to_pay(0.5, tau, 20_000.0, s_same, init_age=62).wtp) for tau in (0.1, 0.9))
    q = health_generator("nonlinear")
    taus = (0.05, 0.1, 0.3, 0.5, 0.7, 0.9)
    w = [willingness_to_pay(0.1, tau, 10_000.0, sol, quantile=q).wtp for tau in taus]
    nonneg = min(w) >= 0 and w[0] > 0
    monotone = all(x >= y for x, y in zip(w, w[1:]))
    record(12, zero <= 1.0 and nonneg and monotone,
           f"identical-arm WTP {zero:.2f}; WTP by shock rank " + ", ".join(f"{t}:{v:.0f}" for t, v in zip(taus, w)))


PIPELINE = ("gen-data", "fit-index", "fit-health", "fit-earnings", "fit-wealth", "solve", "estimate",
            "simulate", "shock", "decompose", "wtp", "inequality", "report")
CONFIG = """[run]
seed = 11
[data]
n_persons = 4000
[health]
n_paths = 20000
[model]
grid = reduced
[estimate]
n_histories = 300
n_starts = 1
max_cycles = 1
max_evals = 12
[simulate]
n_histories = 800
[shock]
n_histories = 500
[decompose]
n_histories = 500
[wtp]
tau_shocks = 0.1,0.9
[inequality]
n_histories = 500
"""


EXE = [shutil.which("healthdyn")] if shutil.which("healthdyn") else [sys.executable, "-m", "healthdyn.cli"]


def _run_pipeline(root: Path, threads: int) -> dict:
    root.mkdir(parents=True)
    ini = root / "run.ini"
    ini.write_text(CONFIG)
    env = {**os.environ, "NUMBA_NUM_THREADS": "4"}
    for cmd in PIPELINE:
        subprocess.run([*EXE, cmd, "-c", str(ini), "--out", str(root / "out"),
                        "--threads", str(threads)], check=True, env=env, capture_output=True)
    return {str(p.relative_to(root / "out")): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted((root / "out").rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_c13_determinism(tmp_path):
    one = _run_pipeline(tmp_path / "t1", 1)
    four = _run_pipeline(tmp_path / "t4", 4)
    differ = sorted(k for k in one if one[k] != four.get(k))
    ok = one.keys() == four.keys() and not differ
    record(13, ok, f"{len(one)} output files bit-identical across 1 and 4 threads"
           if ok else f"files differing across thread counts: {differ[:5]}")
