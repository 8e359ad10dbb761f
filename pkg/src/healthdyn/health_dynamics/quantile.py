"""Nonlinear persistent-health dynamics in conditional-quantile form.

The persistent component moves as ``eta_t = Q_t(eta_{t-1}, u_t)`` with
``u_t ~ U(0, 1)``. Tables store ``Q_t`` on a grid of previous states and
ranks. Between rows we interpolate linearly in ``eta``; between rank columns
we interpolate linearly in normal scores ``Phi^{-1}(tau)``, extending the
outermost segments, so Gaussian innovations are represented exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import norm

from ..errors import InsufficientDataError
from ..io import read_bundle_header, write_bundle_header, write_frame

DEFAULT_TAUS = np.array([0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5,
                         0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.975, 0.99])


@dataclass(frozen=True)
class KinkedQuantileProcess:
    """Known-truth nonlinear generator with rank-dependent persistence.

    Below ``kink`` the persistence of a bad shock (rank < 0.5) is
    ``rho_bad`` and of a good shock ``rho_good``; above ``kink`` it is
    ``rho_high`` for every rank. Innovations are two-piece normal (bad
    shocks larger), recentred to mean zero.
    """

    rho_bad: float = 0.95
    rho_good: float = 0.6
    rho_high: float = 0.9
    sigma_bad: float = 0.45
    sigma_good: float = 0.25
    kink: float = 0.0
    init_sd_low: float = 0.8
    init_sd_high: float = 0.5
    sigma2_eps: float = 0.137

    @property
    def _shift(self) -> float:
        return (self.sigma_good - self.sigma_bad) / np.sqrt(2 * np.pi)

    @property
    def transitory_variance(self) -> float:
        return self.sigma2_eps

    def innovation(self, tau):
        z = norm.ppf(tau)
        return np.where(z < 0, self.sigma_bad * z, self.sigma_good * z) - self._shift

    def slope(self, eta, tau):
        eta, tau = np.broadcast_arrays(np.asarray(eta, float), np.asarray(tau, float))
        low = np.where(tau < 0.5, self.rho_bad, self.rho_good)
        return np.where(eta < self.kink, low, self.rho_high)

    def quantile(self, eta, tau):
        eta = np.asarray(eta, float)
        return self.kink + self.slope(eta, tau) * (eta - self.kink) + self.innovation(tau)

    def step(self, eta, u):
        return self.quantile(eta, u)

    def draw_initial(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal(n)
        return np.where(z < 0, self.init_sd_low * z, self.init_sd_high * z)


def simulate_generator(process, n_paths: int, n_periods: int, seed: int = 0) -> np.ndarray:
    """Persistent-component paths (n_paths, n_periods) from a generator object."""
    rng = np.random.default_rng(seed)
    paths = np.empty((n_paths, n_periods))
    paths[:, 0] = process.draw_initial(rng, n_paths)
    for t in range(1, n_periods):
        paths[:, t] = process.step(paths[:, t - 1], rng.uniform(size=n_paths))
    return paths


@dataclass
class QuantileTable:
    """Conditional quantiles ``q[step, row, col]`` of next-period eta.

    ``eta_grids[step]`` holds the previous-state rows, ``tau_grid`` the rank
    columns; ``initial_quantiles`` is the marginal of eta at the first age on
    the same ranks. A table with a single step is age invariant.
    """

    eta_grids: np.ndarray
    tau_grid: np.ndarray
    q: np.ndarray
    initial_quantiles: np.ndarray
    ages: np.ndarray | None = None
    counts: np.ndarray | None = None
    inherited: np.ndarray | None = None

    def __post_init__(self):
        self.eta_grids = np.atleast_2d(np.asarray(self.eta_grids, float))
        self.tau_grid = np.asarray(self.tau_grid, float)
        self.q = np.asarray(self.q, float)
        if self.q.ndim == 2:
            self.q = self.q[None]
        if np.any(np.diff(self.eta_grids, axis=1) <= 0):
            raise ValueError("eta grids must be strictly increasing")
        if np.any(np.diff(self.tau_grid) <= 0) or self.tau_grid[0] <= 0 or self.tau_grid[-1] >= 1:
            raise ValueError("tau grid must be strictly increasing inside (0, 1)")
        if self.q.shape != (self.eta_grids.shape[0], self.eta_grids.shape[1], self.tau_grid.size):
            raise ValueError("q must have shape (n_steps, n_eta, n_tau)")
        # monotone rearrangement across ranks
        self.q = np.sort(self.q, axis=2)
        self.initial_quantiles = np.sort(np.asarray(self.initial_quantiles, float))
        if self.inherited is None:
            self.inherited = np.zeros(self.q.shape[:2], dtype=bool)

    @property
    def n_steps(self) -> int:
        return self.q.shape[0]

    def _step(self, step: int) -> int:
        return min(step, self.n_steps - 1)

    def _in_tau(self, values: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """Interpolate ``values[..., n_tau]`` at ranks ``tau`` in normal-score space."""
        zg = norm.ppf(self.tau_grid)
        z = norm.ppf(np.clip(tau, 1e-300, 1 - 1e-16))
        j = np.clip(np.searchsorted(zg, z), 1, zg.size - 1)
        frac = (z - zg[j - 1]) / (zg[j] - zg[j - 1])
        lo = np.take_along_axis(values, (j - 1)[..., None], axis=-1)[..., 0]
        hi = np.take_along_axis(values, j[..., None], axis=-1)[..., 0]
        return lo + frac * (hi - lo)

    def quantile(self, eta, tau, step: int = 0, return_clamped: bool = False):
        """Evaluate ``Q_step(eta, tau)`` elementwise (broadcasting)."""
        s = self._step(step)
        grid = self.eta_grids[s]
        eta, tau = np.broadcast_arrays(np.asarray(eta, float), np.asarray(tau, float))
        clamped = (eta < grid[0]) | (eta > grid[-1])
        e = np.clip(eta, grid[0], grid[-1])
        k = np.clip(np.searchsorted(grid, e, side="right"), 1, grid.size - 1)
        w = (e - grid[k - 1]) / (grid[k] - grid[k - 1])
        q_lo = self._in_tau(self.q[s][k - 1], tau)
        q_hi = self._in_tau(self.q[s][k], tau)
        out = q_lo + w * (q_hi - q_lo)
        if return_clamped:
            return out, clamped
        return out

    def initial_draw(self, u):
        return self._in_tau(np.broadcast_to(self.initial_quantiles, np.shape(u) + self.tau_grid.shape), np.asarray(u))

    # serialization --------------------------------------------------------
    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        ages = self.ages if self.ages is not None else np.arange(self.n_steps + 1)
        write_bundle_header(directory, "qtab_v1", {
            "n_steps": self.n_steps, "n_eta": self.eta_grids.shape[1],
            "n_tau": self.tau_grid.size, "ages": list(np.asarray(ages, float)),
        })
        write_frame(directory / "tau_grid.csv", pd.DataFrame({"tau": self.tau_grid}))
        rows = []
        for s in range(self.n_steps):
            for k in range(self.eta_grids.shape[1]):
                rows.append({"step": s, "row": k, "eta_prev": self.eta_grids[s, k],
                             "inherited": int(self.inherited[s, k]),
                             **{f"q{j}": self.q[s, k, j] for j in range(self.tau_grid.size)}})
        write_frame(directory / "quantiles.csv", pd.DataFrame(rows))
        write_frame(directory / "initial.csv", pd.DataFrame({"tau": self.tau_grid,
                                                             "eta": self.initial_quantiles}))
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "QuantileTable":
        directory = Path(directory)
        meta = read_bundle_header(directory, "qtab_v1")
        n_steps, n_eta = int(meta["n_steps"]), int(meta["n_eta"])
        taus = pd.read_csv(directory / "tau_grid.csv")["tau"].to_numpy()
        qf = pd.read_csv(directory / "quantiles.csv").sort_values(["step", "row"])
        grids = qf["eta_prev"].to_numpy().reshape(n_steps, n_eta)
        q = qf[[f"q{j}" for j in range(taus.size)]].to_numpy().reshape(n_steps, n_eta, taus.size)
        inh = qf["inherited"].to_numpy().astype(bool).reshape(n_steps, n_eta)
        init = pd.read_csv(directory / "initial.csv")["eta"].to_numpy()
        ages = np.array([float(a) for a in meta["ages"].split(",")])
        return cls(grids, taus, q, init, ages=ages, inherited=inh)


def ar1_table(rho: float, sigma2_nu: float, eta_grid, tau_grid=DEFAULT_TAUS,
              sigma2_0: float | None = None) -> QuantileTable:
    """Exact table of a Gaussian AR(1): ``Q(eta, tau) = rho*eta + sigma*Phi^-1(tau)``."""
    eta_grid = np.asarray(eta_grid, float)
    tau_grid = np.asarray(tau_grid, float)
    q = rho * eta_grid[:, None] + np.sqrt(sigma2_nu) * norm.ppf(tau_grid)[None, :]
    s0 = sigma2_nu / (1 - rho**2) if sigma2_0 is None else sigma2_0
    init = np.sqrt(s0) * norm.ppf(tau_grid)
    return QuantileTable(eta_grid[None], tau_grid, q[None], init)


def _bin_quantiles(prev, nxt, grid, taus, min_count, recenter):
    n_eta = grid.size
    mids = (grid[1:] + grid[:-1]) / 2.0
    lo_edge = grid[0] - (mids[0] - grid[0]) if n_eta > 1 else -np.inf
    hi_edge = grid[-1] + (grid[-1] - mids[-1]) if n_eta > 1 else np.inf
    inside = (prev >= lo_edge) & (prev <= hi_edge)
    prev, nxt = prev[inside], nxt[inside]
    idx = np.searchsorted(mids, prev)
    counts = np.bincount(idx, minlength=n_eta)
    q = np.full((n_eta, taus.size), np.nan)
    ok = counts >= min_count
    if not ok.any():
        raise InsufficientDataError(f"every eta bin has fewer than {min_count} observations")
    order = np.argsort(idx, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)))
    pooled_slope = np.polyfit(prev, nxt, 1)[0] if prev.size > 1 else 0.0
    for k in range(n_eta):
        if not ok[k]:
            continue
        sel = order[starts[k]:starts[k + 1]]
        y = nxt[sel]
        if recenter:
            lo, hi = max(k - 1, 0), min(k + 1, n_eta - 1)
            nb = order[starts[lo]:starts[hi + 1]]
            x = prev[nb]
            slope = pooled_slope
            if nb.size >= 10 and np.ptp(x) > 0:
                xc = x - x.mean()
                slope = float(xc @ (nxt[nb] - nxt[nb].mean()) / (xc @ xc))
            y = y - slope * (prev[sel] - grid[k])
        q[k] = np.quantile(y, taus)
    inherited = ~ok
    if inherited.any():
        good = np.flatnonzero(ok)
        for k in np.flatnonzero(inherited):
            q[k] = q[good[np.argmin(np.abs(good - k))]]
    return q, counts, inherited


def estimate_quantile_table(eta_paths: np.ndarray, eta_grid=None, tau_grid=DEFAULT_TAUS,
                            min_count: int = 50, recenter: bool = True, pool: bool = False,
                            n_eta: int = 11, ages=None) -> QuantileTable:
    """Binned conditional-quantile estimate of ``Q_t`` from persistent-component paths.

    Observations of ``eta_{t-1}`` are binned around the rows of ``eta_grid``
    (cells between midpoints; the outer cells are mirrored around the end
    rows and observations beyond them are dropped). With ``recenter`` each
    observation's next value is shifted along a local least-squares slope
    to the row value before the empirical quantiles are taken, removing the
    within-bin spread of ``eta_{t-1}``. Rows with fewer than ``min_count`` observations copy the
    nearest populated row and are flagged in ``inherited``.

    ``eta_grid`` may be None (rows at equally spaced ranks of each period's
    eta), one shared grid, or one grid per step. With ``pool`` all adjacent
    pairs feed a single age-invariant table.
    """
    paths = np.asarray(eta_paths, float)
    if paths.ndim != 2 or paths.shape[1] < 2:
        raise InsufficientDataError("need paths with at least two periods")
    taus = np.asarray(tau_grid, float)
    if pool:
        pairs = [(paths[:, :-1].ravel(), paths[:, 1:].ravel())]
    else:
        pairs = [(paths[:, t], paths[:, t + 1]) for t in range(paths.shape[1] - 1)]
    grids, qs, counts, inh = [], [], [], []
    for s, (prev, nxt) in enumerate(pairs):
        keep = np.isfinite(prev) & np.isfinite(nxt)
        prev, nxt = prev[keep], nxt[keep]
        if eta_grid is None:
            grid = np.quantile(prev, np.linspace(0.025, 0.975, n_eta))
        else:
            g = np.asarray(eta_grid, float)
            grid = g[s] if g.ndim == 2 else g
        q, c, flag = _bin_quantiles(prev, nxt, grid, taus, min_count, recenter)
        grids.append(grid)
        qs.append(q)
        counts.append(c)
        inh.append(flag)
    if any(f.any() for f in inh):
        warnings.warn("some eta bins were below min_count and copy a neighbouring row", stacklevel=2)
    init = np.quantile(paths[:, 0][np.isfinite(paths[:, 0])], taus)
    return QuantileTable(np.array(grids), taus, np.array(qs), init, ages=ages,
                         counts=np.array(counts), inherited=np.array(inh))


@dataclass
class EtaPaths:
    paths: np.ndarray
    n_clamped: int = 0
    clamped_by_step: list = field(default_factory=list)


def simulate_nonlinear(qtable: QuantileTable, n_paths: int, horizon: int, seed: int = 0) -> EtaPaths:
    """Simulate ``horizon`` transitions from the initial marginal.

    Draws are taken in one block from a single seeded generator, so paths
    do not depend on how callers split or parallelise the work. States
    outside a table's row range are clamped to the boundary row and counted.
    """
    rng = np.random.default_rng(seed)
    u0 = rng.uniform(size=n_paths)
    u = rng.uniform(size=(n_paths, horizon))
    paths = np.empty((n_paths, horizon + 1))
    paths[:, 0] = qtable.initial_draw(u0)
    by_step = []
    for t in range(horizon):
        paths[:, t + 1], clamped = qtable.quantile(paths[:, t], u[:, t], step=t, return_clamped=True)
        by_step.append(int(clamped.sum()))
    return EtaPaths(paths, int(sum(by_step)), by_step)


def persistence(qtable: QuantileTable, eta, tau, step: int = 0, return_flag: bool = False):
    """Derivative of ``Q_step`` in eta at rank ``tau`` by finite differences.

    The step is the spacing of the grid cell containing ``eta``. Central
    differences are used in the interior; where ``eta -/+ step`` leaves the
    grid a one-sided difference is used and ``flag`` is True.
    """
    s = qtable._step(step)
    grid = qtable.eta_grids[s]
    eta, tau = np.broadcast_arrays(np.asarray(eta, float), np.asarray(tau, float))
    e = np.clip(eta, grid[0], grid[-1])
    k = np.clip(np.searchsorted(grid, e, side="right"), 1, grid.size - 1)
    h = grid[k] - grid[k - 1]
    lo_ok = e - h >= grid[0] - 1e-12
    hi_ok = e + h <= grid[-1] + 1e-12
    lo = np.where(lo_ok, e - h, e)
    hi = np.where(hi_ok, e + h, e)
    val = (qtable.quantile(hi, tau, step=s) - qtable.quantile(lo, tau, step=s)) / (hi - lo)
    flag = ~(lo_ok & hi_ok)
    if return_flag:
        return val, flag
    return val
