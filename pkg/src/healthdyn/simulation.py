"""Forward simulation, targeted moments and counterfactual experiments.

Random numbers are drawn up front as (n, T) uniform matrices from named
streams, so a history depends only on the seed and its row index, never on
the number of threads. Health draws come from their own stream, which can
be re-seeded alone (``health_seed``) for neutrality checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numba import njit, prange
from scipy.stats import lognorm

from .errors import NumericalError
from .lifecycle.inputs import CHANNELS, ModelInputs
from .lifecycle.solver import Solution, _kernel_params, _policy_point, bellman_value, continuation, solve
from .markov import cumulative_rows
from .mortality import CUT_PERCENTILES, health_groups

N_DEFAULT = 15_000
ASSET_AGES = tuple(range(51, 86))
WORK_AGES = tuple(range(50, 70))


@dataclass(frozen=True)
class InitialDistribution:
    """Assets and pension wealth at the first age.

    Each is lognormal with a point mass at zero for assets, unless a fixed
    value is given.
    """

    assets: float | None = None
    asset_median: float = 50_000.0
    asset_sigma: float = 1.2
    asset_zero_share: float = 0.1
    pension: float | None = None
    pension_median: float = 30_000.0
    pension_sigma: float = 0.8

    def draw(self, u_a: np.ndarray, u_p: np.ndarray):
        if self.assets is not None:
            a = np.full(u_a.shape, float(self.assets))
        else:
            z = self.asset_zero_share
            v = np.clip((u_a - z) / (1 - z), 1e-12, 1 - 1e-12)
            a = np.where(u_a < z, 0.0, lognorm.ppf(v, self.asset_sigma, scale=self.asset_median))
        if self.pension is not None:
            p = np.full(u_p.shape, float(self.pension))
        else:
            p = lognorm.ppf(np.clip(u_p, 1e-12, 1 - 1e-12), self.pension_sigma, scale=self.pension_median)
        return a, p


@dataclass
class Histories:
    """Simulated life histories ``[person, age]``; NaN / -1 after death.

    ``eta_latent`` records the exogenous persistent-health chain for every
    person at every age, including after death.
    """

    ages: np.ndarray
    alive: np.ndarray
    eta: np.ndarray
    eps: np.ndarray
    theta: np.ndarray
    h: np.ndarray
    eta_level: np.ndarray
    eta_latent: np.ndarray
    eta_latent_level: np.ndarray
    wage: np.ndarray
    s: np.ndarray
    c: np.ndarray
    a: np.ndarray
    a_next: np.ndarray
    p: np.ndarray
    tax: np.ndarray
    tr: np.ndarray
    work_cost: np.ndarray
    leisure: np.ndarray
    death_age: np.ndarray
    clamped: int = 0
    params: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.alive.shape[0]

    @property
    def earnings(self) -> np.ndarray:
        return self.s * self.wage

    @property
    def disposable_income(self) -> np.ndarray:
        """Labor, pension and capital income after tax, plus transfers."""
        prm = self.params
        working = self.ages[None, :] < prm.pension_age
        labor = self.earnings * np.where(working, 1.0 - prm.c_p, 1.0)
        pension = np.where(working, 0.0, prm.r_p * self.p)
        return labor + pension + prm.r * self.a - self.tax + self.tr

    def budget_residual(self) -> np.ndarray:
        prm = self.params
        gross_flow = self.disposable_income
        return self.a_next - (self.a + gross_flow - self.c - self.work_cost)

    def to_frame(self) -> pd.DataFrame:
        """Long format, one row per person-age alive."""
        i, t = np.nonzero(self.alive)
        cols = dict(person_id=i, age=self.ages[t])
        for name in ("eta", "eps", "theta", "h", "wage", "s", "c", "a", "a_next", "p", "tax", "tr"):
            cols[name] = getattr(self, name)[i, t]
        return pd.DataFrame(cols)


@njit(cache=True)
def _draw(cum_row, u):
    n = cum_row.size
    for j in range(n):
        if u < cum_row[j]:
            return j
    return n - 1


@njit(parallel=True, cache=True)
def _simulate(ages, force, a0, p0, u_eta0, u_eta, u_eps, u_theta0, u_theta, u_surv,
              cum_eta_init, cum_eta_trans, cum_eps, cum_theta_init, cum_theta_trans,
              s_index, c_pol, agrid, pgrid, hours, wage, phi_h, survival, health, eta_lv,
              r, r_p, c_p, c_floor, pension_age, thresholds, rates, cap_rate, w1, w2, w3, part_time, L,
              o_alive, o_eta, o_eps, o_theta, o_h, o_eta_lv, o_latent, o_wage, o_s, o_c, o_a, o_an, o_p,
              o_tax, o_tr, o_wc, o_l, o_death, o_clamp):
    n = a0.size
    T = ages.size
    for i in prange(n):
        ie = _draw(cum_eta_init, u_eta0[i])
        ith = _draw(cum_theta_init, u_theta0[i])
        a = a0[i]
        p = p0[i]
        alive = True
        o_death[i] = -1
        for t in range(T):
            if force[t] >= 0:
                ie = force[t]
            o_latent[i, t] = ie
            if alive:
                age = ages[t]
                ix = _draw(cum_eps[t], u_eps[i, t])
                w = wage[t, ie, ix, ith]
                phi = phi_h[t, ie, ix]
                an, s, c, tax, tr, res, wc, cl = _policy_point(
                    t, a, p, ith, ie, ix, s_index, c_pol, agrid, pgrid, hours, w, phi, float(age),
                    r, r_p, c_p, c_floor, pension_age, thresholds, rates, cap_rate, w1, w2, w3, part_time, L)
                if cl:
                    o_clamp[i] += 1
                o_alive[i, t] = True
                o_eta[i, t] = ie
                o_eps[i, t] = ix
                o_theta[i, t] = ith
                o_h[i, t] = health[t, ie, ix]
                o_eta_lv[i, t] = eta_lv[t, ie]
                o_wage[i, t] = w
                o_s[i, t] = s
                o_c[i, t] = c
                o_a[i, t] = a
                o_an[i, t] = an
                o_p[i, t] = p
                o_tax[i, t] = tax
                o_tr[i, t] = tr
                o_wc[i, t] = wc
                o_l[i, t] = L - s - phi
                if age < pension_age:
                    p = p + c_p * s * w
                a = an
                if not (u_surv[i, t] < survival[t, ie, ix]):
                    alive = False
                    o_death[i] = age
            if t < T - 1:
                ie = _draw(cum_eta_trans[t, ie], u_eta[i, t + 1])
                ith = _draw(cum_theta_trans[ith], u_theta[i, t + 1])


def _streams(seed: int, health_seed: int | None, n: int, T: int):
    # one generator per stream: row i is always the i-th block of its stream
    hs = int(seed) if health_seed is None else int(health_seed)

    def u(key, root, shape):
        return np.random.default_rng(np.random.SeedSequence([root, key])).uniform(size=shape)

    return dict(u_a=u(0, int(seed), n), u_p=u(1, int(seed), n), u_theta0=u(2, int(seed), n),
                u_theta=u(3, int(seed), (n, T)), u_surv=u(4, int(seed), (n, T)),
                u_eta0=u(5, hs, n), u_eta=u(6, hs, (n, T)), u_eps=u(7, hs, (n, T)))


def _force_vector(ages, eta_force) -> np.ndarray:
    force = np.full(ages.size, -1, dtype=np.int64)
    for age, node in (eta_force or {}).items():
        hits = np.flatnonzero(ages == age)
        if hits.size == 0:
            raise ValueError(f"forced age {age} outside the model ages")
        force[hits[0]] = int(node)
    return force


def simulate_histories(solution: Solution, n: int = N_DEFAULT, seed: int = 0,
                       initial: InitialDistribution | None = None, health_seed: int | None = None,
                       eta_force: dict | None = None) -> Histories:
    """Simulate ``n`` life histories from a solved model.

    Parameters
    ----------
    eta_force : dict age -> node, optional
        Overrides the persistent health node at the given ages for everyone.
    """
    if n < 1:
        raise ValueError("n must be positive")
    tb = solution.tables
    if solution.V.shape != tb.shape:
        raise ValueError("solution and tables are misaligned")
    T = tb.ages.size
    initial = InitialDistribution() if initial is None else initial
    st = _streams(seed, health_seed, n, T)
    a0, p0 = initial.draw(st["u_a"], st["u_p"])
    kp = _kernel_params(solution.params)
    for k in ("gamma", "nu", "beta"):
        kp.pop(k)
    shape = (n, T)
    out = dict(o_alive=np.zeros(shape, bool), o_eta=np.full(shape, -1, np.int64),
               o_eps=np.full(shape, -1, np.int64), o_theta=np.full(shape, -1, np.int64),
               o_h=np.full(shape, np.nan), o_eta_lv=np.full(shape, np.nan),
               o_latent=np.full(shape, -1, np.int64))
    for k in ("wage", "s", "c", "a", "an", "p", "tax", "tr", "wc", "l"):
        out[f"o_{k}"] = np.full(shape, np.nan)
    out["o_death"] = np.full(n, -1, np.int64)
    out["o_clamp"] = np.zeros(n, np.int64)
    cum_eps = cumulative_rows(tb.eps_weights)
    _simulate(tb.ages.astype(np.int64), _force_vector(tb.ages, eta_force), a0, p0, st["u_eta0"], st["u_eta"],
              st["u_eps"], st["u_theta0"], st["u_theta"], st["u_surv"],
              cumulative_rows(tb.eta_init), cumulative_rows(tb.eta_trans), cum_eps,
              cumulative_rows(tb.theta_init), cumulative_rows(tb.theta_trans),
              solution.s_index, solution.c, tb.assets, tb.pensions, tb.hours, tb.wage, tb.phi_h,
              tb.survival, tb.health, tb.eta, **kp, **out)
    lat = out["o_latent"]
    return Histories(ages=tb.ages, alive=out["o_alive"], eta=out["o_eta"], eps=out["o_eps"],
                     theta=out["o_theta"], h=out["o_h"], eta_level=out["o_eta_lv"], eta_latent=lat,
                     eta_latent_level=tb.eta[np.arange(T)[None, :], lat],
                     wage=out["o_wage"], s=out["o_s"], c=out["o_c"], a=out["o_a"], a_next=out["o_an"],
                     p=out["o_p"], tax=out["o_tax"], tr=out["o_tr"], work_cost=out["o_wc"],
                     leisure=out["o_l"], death_age=out["o_death"], clamped=int(out["o_clamp"].sum()),
                     params=solution.params)


# moments ----------------------------------------------------------------------

def _age_col(hist: Histories, age: int) -> int:
    hits = np.flatnonzero(hist.ages == age)
    if hits.size == 0:
        raise KeyError(f"age {age} not simulated")
    return int(hits[0])


def compute_moments(hist: Histories, asset_ages=ASSET_AGES, work_ages=WORK_AGES) -> pd.DataFrame:
    """Targeted moments: mean assets by age, mean hours of workers by age,
    participation by age and health group.

    Health groups are cut at the 20th, 30th and 50th percentiles of health
    among survivors at each age (group 1 is the worst). Empty cells are NaN
    with ``missing`` set.
    """
    if hist.n == 0:
        raise ValueError("no histories")
    rows = []
    for age in asset_ages:
        t = _age_col(hist, age)
        m = hist.alive[:, t]
        rows.append((f"assets_{age}", "assets", age, 0, hist.a[m, t].mean() if m.any() else np.nan, int(m.sum())))
    for age in work_ages:
        t = _age_col(hist, age)
        m = hist.alive[:, t] & (hist.s[:, t] > 0)
        rows.append((f"hours_{age}", "hours", age, 0, hist.s[m, t].mean() if m.any() else np.nan, int(m.sum())))
    for age in work_ages:
        t = _age_col(hist, age)
        m = hist.alive[:, t]
        h = hist.h[m, t]
        work = hist.s[m, t] > 0
        grp = health_groups(h, np.quantile(h, CUT_PERCENTILES)) if m.any() else np.empty(0, int)
        for g in range(4):
            sel = grp == g
            rows.append((f"participation_{age}_q{g + 1}", "participation", age, g + 1,
                         work[sel].mean() if sel.any() else np.nan, int(sel.sum())))
    out = pd.DataFrame(rows, columns=["moment_id", "kind", "age", "quartile", "value", "n"])
    out["missing"] = out["value"].isna()
    return out


# counterfactual shocks ------------------------------------------------------------

@dataclass(frozen=True)
class ShockExperiment:
    tau_init: float = 0.1
    tau_shocks: tuple = (0.1, 0.5, 0.9)
    assets: float = 10_000.0
    n_histories: int = N_DEFAULT
    seed: int = 0
    init_age: int = 51
    shock_age: int = 52
    reference: float = 0.5

    def __post_init__(self):
        for tau in (self.tau_init, self.reference, *self.tau_shocks):
            if not 0 < tau < 1:
                raise ValueError(f"rank {tau} outside (0, 1)")
        if self.reference not in self.tau_shocks:
            raise ValueError("the reference arm must be one of the shock ranks")


def _mid_ranks(prob: np.ndarray) -> np.ndarray:
    return np.cumsum(prob) - 0.5 * prob


def marginal_node(solution: Solution, age: int, tau: float):
    """Node whose mid-rank in the mortality-free marginal at ``age`` is nearest ``tau``."""
    tb = solution.tables
    t = int(np.flatnonzero(tb.ages == age)[0])
    marg = tb.eta_init.copy()
    for k in range(t):
        marg = marg @ tb.eta_trans[k]
    ranks = _mid_ranks(marg)
    j = int(np.argmin(np.abs(ranks - tau)))
    return j, float(ranks[j])


def conditional_node(solution: Solution, age: int, node: int, tau: float, quantile=None):
    """Node at ``age`` reached by rank ``tau`` from ``node`` at ``age - 1``.

    With ``quantile`` (a callable ``(eta, tau) -> eta`` or an object with a
    ``quantile`` method, on the persistent component without offsets) the
    node is the grid point nearest ``Q(eta, tau)``. Otherwise the row CDF
    of the chain is inverted, which is coarse in the tails.
    """
    tb = solution.tables
    t = int(np.flatnonzero(tb.ages == age)[0])
    row = tb.eta_trans[t - 1, node]
    cum = np.cumsum(row)
    if quantile is None:
        j = int(min(np.searchsorted(cum, tau, side="left"), row.size - 1))
    else:
        fn = getattr(quantile, "quantile", quantile)
        off = np.zeros(tb.ages.size) if tb.eta_offset is None else tb.eta_offset
        target = float(fn(tb.eta[t - 1, node] - off[t - 1], tau))
        j = int(np.argmin(np.abs(tb.eta[t] - off[t] - target)))
    return j, float(cum[j] - 0.5 * row[j])


@dataclass
class ShockResult:
    levels: pd.DataFrame   # arm, age, variable, value
    diffs: pd.DataFrame    # arm, age, variable, value (minus reference arm)
    nodes: pd.DataFrame    # arm, age, node, snapped_rank
    cov: pd.DataFrame      # arm, age, cov, ratio_to_reference
    histories: dict = field(default_factory=dict, repr=False)


def asset_cov(hist: Histories) -> np.ndarray:
    out = np.full(hist.ages.size, np.nan)
    for t in range(hist.ages.size):
        x = hist.a[hist.alive[:, t], t]
        if x.size and x.mean() != 0:
            out[t] = x.std() / x.mean()
    return out


def profiles(hist: Histories) -> pd.DataFrame:
    """Age profiles: latent persistent health (all persons), and survivors'
    assets, participation and hours (unconditional)."""
    alive = hist.alive
    with np.errstate(invalid="ignore"):
        cnt = alive.sum(axis=0)
        assets = np.where(alive, hist.a, 0.0).sum(axis=0) / cnt
        part = np.where(alive, hist.s > 0, False).sum(axis=0) / cnt
        hours = np.where(alive, hist.s, 0.0).sum(axis=0) / cnt
    health = hist.eta_latent_level.mean(axis=0)
    frames = [pd.DataFrame({"age": hist.ages, "variable": v, "value": x})
              for v, x in (("health", health), ("assets", assets), ("participation", part), ("hours", hours))]
    return pd.concat(frames, ignore_index=True)


def counterfactual_shock(exp: ShockExperiment, solution: Solution,
                         initial: InitialDistribution | None = None, keep_histories: bool = False,
                         quantile=None) -> ShockResult:
    """Impose a persistent-health rank at ``init_age`` and a conditional shock
    rank at ``shock_age``; profiles are differenced against the reference arm.

    All arms share every random draw. The node at the first age is set
    equal to the ``init_age`` node (the step between them is an identity
    in the annualized chain). ``quantile`` is the conditional quantile
    function of the persistent component (see ``conditional_node``).
    """
    base = initial or InitialDistribution()
    init = InitialDistribution(**{**base.__dict__, "assets": exp.assets})
    j0, r0 = marginal_node(solution, exp.init_age, exp.tau_init)
    force_base = {age: j0 for age in solution.ages if age <= exp.init_age}
    levels, nodes, covs, hists = [], [], [], {}
    for tau in exp.tau_shocks:
        j1, r1 = conditional_node(solution, exp.shock_age, j0, tau, quantile)
        hist = simulate_histories(solution, exp.n_histories, exp.seed, init, eta_force={**force_base, exp.shock_age: j1})
        prof = profiles(hist)
        prof.insert(0, "arm", tau)
        levels.append(prof)
        nodes.append((tau, exp.init_age, j0, r0))
        nodes.append((tau, exp.shock_age, j1, r1))
        covs.append(pd.DataFrame({"arm": tau, "age": hist.ages, "cov": asset_cov(hist)}))
        if keep_histories:
            hists[tau] = hist
    levels = pd.concat(levels, ignore_index=True)
    ref = levels[levels["arm"] == exp.reference].set_index(["age", "variable"])["value"]
    diffs = levels.copy()
    diffs["value"] = levels["value"].to_numpy() - ref.reindex(
        pd.MultiIndex.from_frame(levels[["age", "variable"]])).to_numpy()
    cov = pd.concat(covs, ignore_index=True)
    ref_cov = cov[cov["arm"] == exp.reference].set_index("age")["cov"]
    with np.errstate(invalid="ignore", divide="ignore"):
        cov["ratio_to_reference"] = cov["cov"].to_numpy() / ref_cov.reindex(cov["age"]).to_numpy()
    return ShockResult(levels, diffs, pd.DataFrame(nodes, columns=["arm", "age", "node", "snapped_rank"]),
                       cov, hists)


# channel decomposition ------------------------------------------------------

def outcomes(hist: Histories, work_ages=WORK_AGES) -> dict:
    """Life-cycle means over survivors (currency in thousands)."""
    alive = hist.alive
    working_age = np.isin(hist.ages, work_ages)[None, :] & alive
    works = working_age & (hist.s > 0)
    return {"assets": hist.a[alive].mean() / 1000.0,
            "income": hist.disposable_income[alive].mean() / 1000.0,
            "employment": works.sum() / working_age.sum(),
            "hours": hist.s[works].mean() if works.any() else np.nan}


def decompose_channels(inputs: ModelInputs, channels_off=(), percentile: float = 0.75,
                       n: int = N_DEFAULT, seed: int = 0, health_seed: int | None = None,
                       initial: InitialDistribution | None = None, baseline: dict | None = None) -> pd.DataFrame:
    """Outcomes with the listed health channels pinned at ``percentile``.

    Returns the baseline row and, for a non-empty ``channels_off``, the
    counterfactual row with percent changes from the baseline.
    """
    channels_off = tuple(channels_off)
    bad = set(channels_off) - set(CHANNELS)
    if bad:
        raise ValueError(f"unknown channel(s) {sorted(bad)}")
    if baseline is None:
        baseline = outcomes(simulate_histories(solve(inputs), n, seed, initial, health_seed))
    rows = [{"channels": "none", **baseline}]
    if channels_off:
        cf = inputs.neutralize(channels_off, percentile)
        rows.append({"channels": "+".join(channels_off),
                     **outcomes(simulate_histories(solve(cf), n, seed, initial, health_seed))})
    out = pd.DataFrame(rows)
    for k in ("assets", "income", "employment", "hours"):
        out[f"pct_{k}"] = 100.0 * (out[k] / baseline[k] - 1.0)
    out.insert(1, "percentile", percentile)
    return out


# willingness to pay ---------------------------------------------------------

@dataclass
class WtpResult:
    wtp: float
    clamped: bool
    init_node: int
    shock_node: int | None
    init_rank: float
    shock_rank: float | None
    value_free: float
    value_shock: float


def _expected_value(solution: Solution, t: int, a: float, p: float, eta: int, ev_table: np.ndarray) -> float:
    tb = solution.tables
    th = tb.theta_init.copy()
    for _ in range(t):
        th = th @ tb.theta_trans
    total = 0.0
    for ith in range(tb.theta.size):
        for ix in range(tb.eps_weights.shape[1]):
            w = th[ith] * tb.eps_weights[t, ix]
            if w > 0:
                total += w * bellman_value(solution, t, a, p, ith, eta, ix, ev=ev_table[:, :, ith])
    return total


def willingness_to_pay(tau_init: float, tau_shock: float | None, a0: float, solution: Solution,
                       p0: float | None = None, init_age: int = 51, tol: float = 1.0,
                       quantile=None) -> WtpResult:
    """Asset transfer at ``init_age`` that compensates a forced health shock.

    Compares the expected value with assets ``a0 + wtp`` and the next
    persistent node forced by rank ``tau_shock`` against the value with
    assets ``a0`` and the unconstrained transition (``tau_shock=None``
    returns the comparison arm itself). Expectations integrate over the
    transitory health draw and the wage component. ``quantile`` selects the
    shocked node as in ``conditional_node``.
    """
    if a0 < 0:
        raise ValueError("a0 must be non-negative")
    tb = solution.tables
    t = int(np.flatnonzero(tb.ages == init_age)[0])
    if t >= tb.ages.size - 1:
        raise ValueError("init_age must precede the last age")
    p0 = InitialDistribution().pension_median if p0 is None else float(p0)
    j0, r0 = marginal_node(solution, init_age, tau_init)
    free_ev = solution.EV[t, :, :, :, j0]
    v_free = _expected_value(solution, t, a0, p0, j0, free_ev)
    if tau_shock is None:
        return WtpResult(0.0, False, j0, None, r0, None, v_free, v_free)
    j1, r1 = conditional_node(solution, init_age + 1, j0, tau_shock, quantile)
    forced = np.zeros_like(tb.eta_trans[t])
    forced[:, j1] = 1.0
    shock_ev = continuation(solution.V[t + 1], tb.eps_weights[t + 1], forced, tb.theta_trans)[:, :, :, j0]

    def gap(delta):
        return _expected_value(solution, t, a0 + delta, p0, j0, shock_ev) - v_free

    g0 = gap(0.0)
    if g0 >= 0:
        return WtpResult(0.0, g0 > 0, j0, j1, r0, r1, v_free, v_free + g0)
    hi = float(tb.assets[-1])
    if gap(hi) < 0:
        raise NumericalError(f"willingness to pay exceeds the asset-grid bound {hi:.0f}")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return WtpResult(0.5 * (lo + hi), False, j0, j1, r0, r1, v_free, v_free + gap(0.5 * (lo + hi)))


# inequality -----------------------------------------------------------------

@dataclass
class InequalityTable:
    summary: pd.DataFrame   # metric, value
    by_age: pd.DataFrame    # age, n, mean, sd, cov, ratio_80_20


def _ratio_80_20(x: np.ndarray) -> float:
    if x.size == 0:
        return np.nan
    q20, q80 = np.quantile(x, [0.2, 0.8])
    return q80 / q20 if q20 > 0 else np.nan


def inequality_metrics(hist: Histories, earnings_age: int = 65) -> InequalityTable:
    """Asset dispersion by age and cumulated earnings at ``earnings_age``.

    Asset figures are in thousands. Ages where the 20th percentile is not
    positive have no 80/20 ratio; lifetime averages skip them.
    """
    if hist.n == 0:
        raise ValueError("no histories")
    rows = []
    for t, age in enumerate(hist.ages):
        x = hist.a[hist.alive[:, t], t] / 1000.0
        mean = x.mean() if x.size else np.nan
        sd = x.std() if x.size else np.nan
        rows.append((int(age), x.size, mean, sd, sd / mean if x.size and mean != 0 else np.nan, _ratio_80_20(x)))
    by_age = pd.DataFrame(rows, columns=["age", "n", "mean", "sd", "cov", "ratio_80_20"])
    t65 = _age_col(hist, earnings_age)
    alive65 = hist.alive[:, t65]
    cum = np.nansum(np.where(hist.alive[:, :t65], hist.earnings[:, :t65], 0.0), axis=1)[alive65] / 1000.0
    pos = cum[cum > 0]
    summary = pd.DataFrame({"metric": ["assets_ratio_80_20", "assets_sd", "earnings65_ratio_80_20",
                                       "earnings65_sd_log", "earnings65_zero_share"],
                            "value": [by_age["ratio_80_20"].mean(skipna=True) if by_age["ratio_80_20"].notna().any()
                                      else np.nan,
                                      by_age["sd"].mean(),
                                      _ratio_80_20(cum),
                                      np.log(pos).std() if pos.size > 1 else np.nan,
                                      float((cum <= 0).mean()) if cum.size else np.nan]})
    return InequalityTable(summary, by_age)
