"""Preferences, costs and the budget constraint.

The ``_nb_*`` kernels are scalar numba functions shared with the solver
and simulator; the public wrappers validate inputs and broadcast.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .params import ModelParams, TaxSchedule, TimeCostSpline


class DomainError(ValueError):
    """Argument outside the domain of a model primitive."""


@njit(cache=True)
def _nb_utility(c, l, gamma, nu):
    return (c**gamma * l ** (1.0 - gamma)) ** (1.0 - nu) / (1.0 - nu)


@njit(cache=True)
def _nb_bequest(a, phi_b, K, nu, gamma):
    if phi_b == 0.0:
        return 0.0
    return phi_b * (a + K) ** ((1.0 - nu) * gamma) / (1.0 - nu)


@njit(cache=True)
def _nb_work_cost(s, age, w1, w2, w3, pension_age, part_time):
    if s <= 0.0:
        return 0.0
    cost = w1 + w2 * age
    if age >= pension_age and s > part_time:
        cost += w3 * s
    return cost


@njit(cache=True)
def _nb_tax(y_labor, y_capital, thresholds, rates, capital_rate):
    tax = 0.0
    nb = thresholds.size
    for b in range(nb):
        lo = thresholds[b]
        if y_labor <= lo:
            break
        hi = thresholds[b + 1] if b + 1 < nb else np.inf
        tax += rates[b] * (min(y_labor, hi) - lo)
    if y_capital > 0.0:
        tax += capital_rate * y_capital
    return tax


@njit(cache=True)
def _nb_resources(a, s, wage, p, age, r, r_p, c_p, c_floor, pension_age,
                  thresholds, rates, capital_rate):
    """Returns (resources, tax, transfer) for one state and hours choice."""
    earn = s * wage
    if age < pension_age:
        labor = earn * (1.0 - c_p)
        pension = 0.0
    else:
        labor = earn
        pension = r_p * p
    cap = r * a
    tax = _nb_tax(labor + pension, cap, thresholds, rates, capital_rate)
    cash = a + labor + pension + cap - tax
    tr = c_floor - cash if cash < c_floor else 0.0
    return cash + tr, tax, tr


def utility(c, l, gamma: float, nu: float):
    """CRRA utility over the Cobb-Douglas composite of consumption and leisure."""
    c = np.asarray(c, float)
    l = np.asarray(l, float)
    if np.any(c <= 0) or np.any(l <= 0):
        raise DomainError("utility needs c > 0 and l > 0")
    if nu == 1:
        raise DomainError("nu = 1 is not supported")
    return (c**gamma * l ** (1.0 - gamma)) ** (1.0 - nu) / (1.0 - nu)


def bequest(a, phi_b: float, K: float, nu: float, gamma: float):
    """Warm-glow bequest value; ``K > 0`` keeps a zero bequest finite."""
    a = np.asarray(a, float)
    if K <= 0:
        raise DomainError("K must be positive")
    if np.any(a < 0):
        raise DomainError("bequest needs a >= 0")
    if phi_b == 0:
        return np.zeros_like(a)
    return phi_b * (a + K) ** ((1.0 - nu) * gamma) / (1.0 - nu)


def time_cost(h, spline: TimeCostSpline, return_clamped: bool = False):
    return spline(h, return_clamped=return_clamped)


def work_cost(s, age, phi_w, pension_age: int = 65, part_time: float = 1250.0):
    """Monetary cost of positive hours, linear in age, with a surcharge after ``pension_age``."""
    s = np.asarray(s, float)
    age = np.asarray(age, float)
    if np.any(s < 0):
        raise DomainError("hours must be non-negative")
    w1, w2, w3 = phi_w
    cost = np.where(s > 0, w1 + w2 * age, 0.0)
    return cost + np.where((s > part_time) & (age >= pension_age), w3 * s, 0.0)


def net_resources(a, s, wage, p, age, params: ModelParams):
    """Cash on hand after taxes and the floor transfer.

    Returns
    -------
    resources, tax, tr : arrays
        ``resources = gross - tax + tr`` with ``tr = max(0, c_floor - (gross - tax))``.
    """
    a, s, wage, p, age = np.broadcast_arrays(*(np.asarray(v, float) for v in (a, s, wage, p, age)))
    working = age < params.pension_age
    labor = s * wage * np.where(working, 1.0 - params.c_p, 1.0)
    pension = np.where(working, 0.0, params.r_p * p)
    cap = params.r * a
    tax = params.tax(labor + pension, cap)
    cash = a + labor + pension + cap - tax
    tr = np.maximum(0.0, params.c_floor - cash)
    return cash + tr, tax, tr


def tax_arrays(tax: TaxSchedule):
    return (np.asarray(tax.thresholds, float), np.asarray(tax.rates, float), float(tax.capital_rate))
