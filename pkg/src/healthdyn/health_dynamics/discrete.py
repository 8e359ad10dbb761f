"""Finite-state health processes: simulate-then-bin discretization,
biennial-to-annual reconciliation and the survivor-median location correction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import norm

from ..errors import InsufficientDataError
from ..io import read_bundle_header, write_bundle_header, write_frame
from ..markov import cumulative_rows


@dataclass
class DiscreteHealthProcess:
    """Age-indexed persistent grids, transitory nodes and transition matrices.

    ``trans[k]`` moves the distribution from ``ages[k]`` to ``ages[k + 1]``.
    The health level at age ``ages[k]`` for nodes ``(i, j)`` is
    ``eta_grids[k, i] + offsets[k] + eps_grids[k, j]``.
    """

    ages: np.ndarray
    eta_grids: np.ndarray
    trans: np.ndarray
    init: np.ndarray
    eps_grids: np.ndarray
    eps_weights: np.ndarray
    offsets: np.ndarray | None = None
    period: int = 2
    repaired: np.ndarray | None = None
    identity_steps: np.ndarray | None = None

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=int)
        self.eta_grids = np.atleast_2d(np.asarray(self.eta_grids, float))
        self.trans = np.asarray(self.trans, float)
        self.init = np.asarray(self.init, float)
        n_ages, n_eta = self.eta_grids.shape
        self.eps_grids = np.asarray(self.eps_grids, float)
        self.eps_weights = np.asarray(self.eps_weights, float)
        if self.eps_grids.ndim == 1:
            self.eps_grids = np.tile(self.eps_grids, (n_ages, 1))
        if self.eps_weights.ndim == 1:
            self.eps_weights = np.tile(self.eps_weights, (n_ages, 1))
        if self.offsets is None:
            self.offsets = np.zeros(n_ages)
        self.offsets = np.asarray(self.offsets, float)
        if self.repaired is None:
            self.repaired = np.zeros((max(n_ages - 1, 0), n_eta), dtype=bool)
        if self.identity_steps is None:
            self.identity_steps = np.zeros(max(n_ages - 1, 0), dtype=bool)
        if self.ages.size != n_ages or self.trans.shape != (n_ages - 1, n_eta, n_eta):
            raise ValueError("inconsistent ages / grids / transition shapes")
        if np.any(np.diff(self.eta_grids, axis=1) < 0) or np.any(np.diff(self.eps_grids, axis=1) < 0):
            raise ValueError("grids must be sorted")
        if np.any(self.trans < 0) or np.any(np.abs(self.trans.sum(axis=2) - 1) > 1e-12):
            raise ValueError("transition rows must be non-negative and sum to one")

    @property
    def n_eta(self) -> int:
        return self.eta_grids.shape[1]

    @property
    def n_eps(self) -> int:
        return self.eps_grids.shape[1]

    def age_index(self, age: int) -> int:
        hits = np.flatnonzero(self.ages == age)
        if hits.size == 0:
            raise KeyError(f"age {age} not in process")
        return int(hits[0])

    def levels(self, k: int) -> np.ndarray:
        """Health levels (n_eta, n_eps) at age index ``k``."""
        return self.eta_grids[k][:, None] + self.offsets[k] + self.eps_grids[k][None, :]

    def marginals(self) -> np.ndarray:
        """Unconditional node probabilities (n_ages, n_eta) ignoring mortality."""
        out = np.empty(self.eta_grids.shape)
        out[0] = self.init
        for k in range(self.trans.shape[0]):
            out[k + 1] = out[k] @ self.trans[k]
        return out

    def simulate(self, n: int, seed: int = 0) -> np.ndarray:
        """Node-index paths (n, n_ages) drawn from ``init`` and ``trans``."""
        rng = np.random.default_rng(seed)
        u = rng.uniform(size=(n, self.ages.size))
        idx = np.empty((n, self.ages.size), dtype=np.int64)
        idx[:, 0] = np.minimum(np.searchsorted(np.cumsum(self.init), u[:, 0], side="right"), self.n_eta - 1)
        for k in range(self.trans.shape[0]):
            cum = cumulative_rows(self.trans[k])[idx[:, k]]
            idx[:, k + 1] = np.minimum((u[:, k + 1, None] >= cum).sum(axis=1), self.n_eta - 1)
        return idx

    # serialization ----------------------------------------------------------
    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        write_bundle_header(directory, "dhp_v1", {
            "n_ages": self.ages.size, "n_eta": self.n_eta, "n_eps": self.n_eps,
            "period": self.period, "ages": list(self.ages),
        })
        grid_rows = [{"age": int(a), "node": i, "eta": self.eta_grids[k, i], "init": self.init[i] if k == 0 else np.nan}
                     for k, a in enumerate(self.ages) for i in range(self.n_eta)]
        write_frame(directory / "eta_grid.csv", pd.DataFrame(grid_rows))
        eps_rows = [{"age": int(a), "node": j, "eps": self.eps_grids[k, j], "weight": self.eps_weights[k, j]}
                    for k, a in enumerate(self.ages) for j in range(self.n_eps)]
        write_frame(directory / "eps_grid.csv", pd.DataFrame(eps_rows))
        write_frame(directory / "offsets.csv", pd.DataFrame({"age": self.ages, "offset": self.offsets}))
        rows = []
        for k in range(self.trans.shape[0]):
            for i in range(self.n_eta):
                rows.append({"step": k, "from_age": int(self.ages[k]), "row": i,
                             "identity": int(self.identity_steps[k]), "repaired": int(self.repaired[k, i]),
                             **{f"p{j}": self.trans[k, i, j] for j in range(self.n_eta)}})
        write_frame(directory / "transitions.csv", pd.DataFrame(rows))
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "DiscreteHealthProcess":
        directory = Path(directory)
        meta = read_bundle_header(directory, "dhp_v1")
        n_ages, n_eta, n_eps = int(meta["n_ages"]), int(meta["n_eta"]), int(meta["n_eps"])
        g = pd.read_csv(directory / "eta_grid.csv").sort_values(["age", "node"])
        e = pd.read_csv(directory / "eps_grid.csv").sort_values(["age", "node"])
        off = pd.read_csv(directory / "offsets.csv").sort_values("age")
        ages = off["age"].to_numpy()
        if n_ages > 1:
            t = pd.read_csv(directory / "transitions.csv").sort_values(["step", "row"])
            trans = t[[f"p{j}" for j in range(n_eta)]].to_numpy().reshape(n_ages - 1, n_eta, n_eta)
            rep = t["repaired"].to_numpy().astype(bool).reshape(n_ages - 1, n_eta)
            ident = t["identity"].to_numpy().astype(bool).reshape(n_ages - 1, n_eta)[:, 0]
        else:
            trans = np.zeros((0, n_eta, n_eta))
            rep = ident = None
        return cls(ages=ages, eta_grids=g["eta"].to_numpy().reshape(n_ages, n_eta), trans=trans,
                   init=g["init"].to_numpy()[:n_eta], eps_grids=e["eps"].to_numpy().reshape(n_ages, n_eps),
                   eps_weights=e["weight"].to_numpy().reshape(n_ages, n_eps),
                   offsets=off["offset"].to_numpy(), period=int(meta["period"]),
                   repaired=rep, identity_steps=ident)


def gaussian_nodes(variance: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-probability nodes (bin conditional means) of N(0, variance)."""
    if n == 1 or variance == 0:
        return np.zeros(n), np.full(n, 1.0 / n)
    sd = np.sqrt(variance)
    z = norm.ppf(np.linspace(0.0, 1.0, n + 1))
    nodes = n * sd * (norm.pdf(z[:-1]) - norm.pdf(z[1:]))
    return nodes, np.full(n, 1.0 / n)


def _sample_nodes(sample: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    sample = np.sort(np.asarray(sample, float)[np.isfinite(sample)])
    edges = np.quantile(sample, np.linspace(0, 1, n + 1))
    idx = np.clip(np.searchsorted(edges[1:-1], sample, side="right"), 0, n - 1)
    counts = np.bincount(idx, minlength=n)
    sums = np.bincount(idx, weights=sample, minlength=n)
    return sums / np.maximum(counts, 1), counts / counts.sum()


def discretize(eta_paths, eps_distribution, n_eta: int = 19, n_eps: int = 5,
               ages=None, nodes: str = "midpoint", min_per_cell: int = 10) -> DiscreteHealthProcess:
    """Bin simulated persistent paths into an age-indexed Markov chain.

    Parameters
    ----------
    eta_paths : (n_paths, n_ages) array, or an object with ``.paths``
        One column per biennial age; NaN marks a path no longer observed.
    eps_distribution : float or array
        Transitory variance (Gaussian nodes) or a sample of transitory draws.
    nodes : {"midpoint", "mean"}
        Node value of a bin: its mid-rank quantile or its mean.

    Grids use equal-probability bins of each age's cross-section. Transition
    rows are counted from one column to the next; rows with no mass copy the
    nearest populated row and are flagged in ``repaired``.
    """
    paths = np.asarray(getattr(eta_paths, "paths", eta_paths), float)
    n_paths, n_ages = paths.shape
    ages = np.arange(50, 50 + 2 * n_ages, 2) if ages is None else np.asarray(ages, int)
    if ages.size != n_ages:
        raise ValueError("ages must match the number of path columns")
    need = min_per_cell * n_eta**2
    grids = np.empty((n_ages, n_eta))
    bins = np.full(paths.shape, -1, dtype=np.int64)
    for k in range(n_ages):
        col = paths[:, k]
        ok = np.isfinite(col)
        if k < n_ages - 1 and np.sum(ok & np.isfinite(paths[:, k + 1])) < need:
            raise InsufficientDataError(
                f"age {ages[k]}: fewer than {need} path transitions for {n_eta} nodes")
        edges = np.quantile(col[ok], np.linspace(0, 1, n_eta + 1))
        b = np.clip(np.searchsorted(edges[1:-1], col[ok], side="right"), 0, n_eta - 1)
        bins[ok, k] = b
        if nodes == "midpoint":
            grids[k] = np.quantile(col[ok], (np.arange(n_eta) + 0.5) / n_eta)
        elif nodes == "mean":
            grids[k] = np.bincount(b, weights=col[ok], minlength=n_eta) / np.maximum(
                np.bincount(b, minlength=n_eta), 1)
        else:
            raise ValueError("nodes must be 'midpoint' or 'mean'")
        grids[k] = np.maximum.accumulate(grids[k])

    trans = np.zeros((n_ages - 1, n_eta, n_eta))
    repaired = np.zeros((n_ages - 1, n_eta), dtype=bool)
    for k in range(n_ages - 1):
        ok = (bins[:, k] >= 0) & (bins[:, k + 1] >= 0)
        np.add.at(trans[k], (bins[ok, k], bins[ok, k + 1]), 1.0)
        mass = trans[k].sum(axis=1)
        full = np.flatnonzero(mass > 0)
        for i in np.flatnonzero(mass == 0):
            repaired[k, i] = True
            trans[k, i] = trans[k, full[np.argmin(np.abs(full - i))]]
        trans[k] /= trans[k].sum(axis=1, keepdims=True)
    if repaired.any():
        warnings.warn(f"{int(repaired.sum())} empty transition rows copied from neighbours", stacklevel=2)

    first = bins[:, 0][bins[:, 0] >= 0]
    init = np.bincount(first, minlength=n_eta) / first.size

    if np.ndim(eps_distribution) == 0:
        eps, w = gaussian_nodes(float(eps_distribution), n_eps)
    else:
        eps, w = _sample_nodes(eps_distribution, n_eps)
    return DiscreteHealthProcess(ages=ages, eta_grids=grids, trans=trans, init=init,
                                 eps_grids=eps, eps_weights=w, period=2, repaired=repaired)


def annualize(process: DiscreteHealthProcess) -> DiscreteHealthProcess:
    """Annual sequence from a biennial one.

    Each biennial age ``a`` covers annual ages ``a`` and ``a + 1``. The step
    ``a -> a + 1`` is the identity and ``a + 1 -> a + 2`` applies the
    biennial matrix, so each two-step block composes to it exactly.
    """
    if process.period != 2:
        raise ValueError("annualize expects a biennial process")
    n_b = process.ages.size
    ages = np.arange(process.ages[0], process.ages[-1] + 2)
    src = (ages - ages[0]) // 2
    n = process.n_eta
    trans = np.empty((ages.size - 1, n, n))
    ident = np.zeros(ages.size - 1, dtype=bool)
    repaired = np.zeros((ages.size - 1, n), dtype=bool)
    for k in range(ages.size - 1):
        if k % 2 == 0:
            trans[k] = np.eye(n)
            ident[k] = True
        else:
            trans[k] = process.trans[k // 2]
            repaired[k] = process.repaired[k // 2]
    assert src[-1] == n_b - 1
    return DiscreteHealthProcess(ages=ages, eta_grids=process.eta_grids[src], trans=trans,
                                 init=process.init.copy(), eps_grids=process.eps_grids[src],
                                 eps_weights=process.eps_weights[src], offsets=process.offsets[src],
                                 period=1, repaired=repaired, identity_steps=ident)


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    """Median of a discrete distribution, interpolating its CDF linearly between atoms."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, float)[order]
    w = np.asarray(weights, float)[order]
    total = w.sum()
    if total <= 0:
        return np.nan
    # CDF evaluated at atom centres (mid-mass), as for a sample median
    mid = (np.cumsum(w) - 0.5 * w) / total
    return float(np.interp(0.5, mid, v))


@dataclass
class BiasCorrection:
    process: DiscreteHealthProcess
    converged: bool
    iterations: int
    max_gap: float
    history: list = field(default_factory=list)


def survivor_medians(process: DiscreteHealthProcess, death_prob, offsets=None) -> np.ndarray:
    """Median health among survivors at each age under mass propagation.

    ``death_prob(age, h)`` gives the probability of dying between ``age`` and
    the next age of the process for health level ``h``.
    """
    offsets = process.offsets if offsets is None else np.asarray(offsets, float)
    mass = process.init.astype(float).copy()
    out = np.empty(process.ages.size)
    for k, age in enumerate(process.ages):
        levels = process.eta_grids[k][:, None] + offsets[k] + process.eps_grids[k][None, :]
        joint = mass[:, None] * process.eps_weights[k][None, :]
        out[k] = weighted_median(levels.ravel(), joint.ravel())
        if k < process.trans.shape[0]:
            surv = (process.eps_weights[k][None, :] * (1.0 - death_prob(int(age), levels))).sum(axis=1)
            mass = (mass * surv) @ process.trans[k]
    return out


def mortality_bias_correction(process: DiscreteHealthProcess, mortality, target_medians=None,
                              tol: float = 1e-3, max_iter: int = 50) -> BiasCorrection:
    """Shift each age's grid so survivors' median health matches a target.

    ``mortality`` is a callable ``(age, h) -> death probability`` or an
    object with a ``death_prob`` method. By default the targets are the
    medians of the process itself before mortality selection, i.e. the
    median of the observed (survivor) data the process was built from.
    Offsets are updated by ``offset += target - median`` starting from the
    process's current offsets.
    """
    death_prob = getattr(mortality, "death_prob", mortality)
    if target_medians is None:
        target = survivor_medians(process, lambda age, h: np.zeros_like(h))
    else:
        target = np.asarray(target_medians, float)
        if target.shape != process.offsets.shape:
            raise ValueError("one target median per age is required")
    offsets = process.offsets.copy()
    history = []
    best = (np.inf, offsets.copy())
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        med = survivor_medians(process, death_prob, offsets)
        gap = target - med
        worst = float(np.max(np.abs(gap)))
        history.append(worst)
        if worst < best[0]:
            best = (worst, offsets.copy())
        if worst < tol:
            converged = True
            break
        offsets = offsets + gap
    if not converged:
        med = survivor_medians(process, death_prob, offsets)
        worst = float(np.max(np.abs(target - med)))
        if worst < best[0]:
            best = (worst, offsets.copy())
        warnings.warn(f"median correction stopped after {max_iter} iterations, max gap {best[0]:.2e}",
                      stacklevel=2)
    return BiasCorrection(replace(process, offsets=best[1]), converged, it, best[0], history)
