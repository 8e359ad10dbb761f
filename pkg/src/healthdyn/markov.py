"""Finite Markov chain utilities shared by the health and earnings processes."""

from __future__ import annotations

import numpy as np
from scipy import integrate
from scipy.stats import norm


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    sums = matrix.sum(axis=-1, keepdims=True)
    return matrix / sums


def equiprobable_ar1(rho: float, sigma2_nu: float, n: int, init_var: float | None = None):
    """Equal-probability discretization of a Gaussian AR(1).

    The stationary distribution N(0, sigma2_nu / (1 - rho**2)) is cut into
    ``n`` bins of equal mass. Nodes are the conditional means of the bins and
    transition probabilities integrate the AR(1) law over each origin bin.

    Returns
    -------
    grid : (n,) array of node values
    trans : (n, n) row-stochastic matrix
    init : (n,) probabilities of N(0, init_var) over the bins (stationary
        weights ``1/n`` when ``init_var`` is None)
    """
    if abs(rho) >= 1:
        raise ValueError("|rho| must be < 1")
    if sigma2_nu < 0:
        raise ValueError("sigma2_nu must be >= 0")
    if n == 1 or sigma2_nu == 0:
        grid = np.zeros(n)
        trans = np.full((n, n), 1.0 / n) if n > 1 else np.ones((1, 1))
        if sigma2_nu == 0 and n > 1:
            trans = np.eye(n)
        init = np.full(n, 1.0 / n)
        return grid, trans, init

    sigma_nu = np.sqrt(sigma2_nu)
    sigma_z = sigma_nu / np.sqrt(1.0 - rho**2)
    edges = sigma_z * norm.ppf(np.linspace(0.0, 1.0, n + 1))
    std_edges = edges / sigma_z
    grid = n * sigma_z * (norm.pdf(std_edges[:-1]) - norm.pdf(std_edges[1:]))

    trans = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            def integrand(x, j=j):
                return norm.pdf(x, scale=sigma_z) * (
                    norm.cdf((edges[j + 1] - rho * x) / sigma_nu)
                    - norm.cdf((edges[j] - rho * x) / sigma_nu)
                )

            trans[i, j] = n * integrate.quad(integrand, edges[i], edges[i + 1], limit=200)[0]
    trans = normalize_rows(np.clip(trans, 0.0, None))

    if init_var is None:
        init = np.full(n, 1.0 / n)
    elif init_var == 0:
        init = np.zeros(n)
        init[np.searchsorted(edges[1:-1], 0.0)] = 1.0
    else:
        init = np.diff(norm.cdf(edges / np.sqrt(init_var)))
        init = init / init.sum()
    return grid, trans, init


def stationary_distribution(trans: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000) -> np.ndarray:
    n = trans.shape[0]
    dist = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        new = dist @ trans
        if np.max(np.abs(new - dist)) < tol:
            return new
        dist = new
    return dist


def chain_autocorrelation(grid: np.ndarray, trans: np.ndarray, dist: np.ndarray | None = None) -> float:
    """Lag-1 autocorrelation of a chain started from ``dist`` (stationary by default)."""
    if dist is None:
        dist = stationary_distribution(trans)
    grid = np.asarray(grid, dtype=float)
    mean0 = dist @ grid
    var0 = dist @ (grid - mean0) ** 2
    nxt = dist @ trans
    mean1 = nxt @ grid
    var1 = nxt @ (grid - mean1) ** 2
    cross = np.sum(dist[:, None] * trans * np.outer(grid - mean0, grid - mean1))
    return float(cross / np.sqrt(var0 * var1))


def draw_from_rows(cum_rows: np.ndarray, state: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of next states given cumulative transition rows."""
    rows = cum_rows[state]
    nxt = (uniforms[:, None] >= rows).sum(axis=1)
    return np.minimum(nxt, cum_rows.shape[1] - 1)


def cumulative_rows(trans: np.ndarray) -> np.ndarray:
    cum = np.cumsum(trans, axis=-1)
    cum[..., -1] = 1.0
    return cum


def rouwenhorst(rho: float, sigma2_nu: float, n: int, init_var: float | None = None):
    """Rouwenhorst discretization of a Gaussian AR(1).

    Exact in the lag-1 autocorrelation and the stationary variance for any
    ``n``, which matters when only a handful of nodes are affordable.
    Returns ``(grid, trans, init)`` like :func:`equiprobable_ar1`; ``init``
    assigns N(0, init_var) mass to the nodes by midpoint cells.
    """
    if abs(rho) >= 1:
        raise ValueError("|rho| must be < 1")
    if sigma2_nu < 0:
        raise ValueError("sigma2_nu must be >= 0")
    if n == 1:
        return np.zeros(1), np.ones((1, 1)), np.ones(1)
    sigma_z = np.sqrt(sigma2_nu / (1.0 - rho**2))
    psi = np.sqrt(n - 1) * sigma_z
    grid = np.linspace(-psi, psi, n)
    p = (1.0 + rho) / 2.0
    trans = np.array([[p, 1 - p], [1 - p, p]])
    for m in range(3, n + 1):
        big = np.zeros((m, m))
        big[:-1, :-1] += p * trans
        big[:-1, 1:] += (1 - p) * trans
        big[1:, :-1] += (1 - p) * trans
        big[1:, 1:] += p * trans
        big[1:-1] /= 2.0
        trans = big
    trans = normalize_rows(trans)
    if sigma2_nu == 0:
        grid = np.zeros(n)
        trans = np.eye(n)
    if init_var is None:
        init = stationary_distribution(trans) if sigma2_nu > 0 else np.full(n, 1.0 / n)
    elif init_var == 0 or sigma2_nu == 0:
        init = np.zeros(n)
        init[n // 2] = 1.0
    else:
        mids = (grid[1:] + grid[:-1]) / 2.0
        cdf = norm.cdf(np.concatenate(([-np.inf], mids, [np.inf])) / np.sqrt(init_var))
        init = np.diff(cdf)
        init = init / init.sum()
    return grid, trans, init
