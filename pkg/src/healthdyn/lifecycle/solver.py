"""Backward induction on the discrete state space.

State at age ``t``: assets ``a``, pension wealth ``p``, wage component
``theta``, persistent health ``eta`` and transitory health ``eps``. The
choice is next-period assets on the asset grid and hours from the hours
set. Pension wealth is carried off-grid and the continuation value is
interpolated linearly in ``p``.

Expectations are taken as ``V0 + sum_j w_j (V_j - V0)``: when every
continuation value is equal the result is exactly that value, so states
that the primitives cannot tell apart end up with bit-identical values and
policies.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numba import njit, prange

from ..errors import LoadError, NumericalError
from ..io import read_bundle_header, write_bundle_header, write_frame
from .inputs import ModelInputs, Tables
from .params import ModelParams
from .primitives import _nb_bequest, _nb_resources, _nb_work_cost, tax_arrays


@njit(cache=True)
def _centered_expectation(values, weights):
    """E over the last axis of ``values`` (..., n) with ``weights`` (m, n) -> (..., m)."""
    lead = values.shape[0]
    n = values.shape[1]
    m = weights.shape[0]
    out = np.empty((lead, m))
    for i in range(lead):
        base = values[i, 0]
        for k in range(m):
            acc = 0.0
            for j in range(1, n):
                acc += weights[k, j] * (values[i, j] - base)
            out[i, k] = base + acc
    return out


def continuation(V_next: np.ndarray, eps_w_next: np.ndarray, eta_trans: np.ndarray,
                 theta_trans: np.ndarray) -> np.ndarray:
    """Expected next-period value EV[a', p', theta, eta] from V[a', p', theta', eta', eps']."""
    na, npn, nth, ne, nx = V_next.shape
    vbar = _centered_expectation(V_next.reshape(-1, nx), eps_w_next[None, :]).reshape(na, npn, nth, ne)
    ev_eta = _centered_expectation(vbar.reshape(-1, ne), eta_trans).reshape(na, npn, nth, ne)
    moved = np.ascontiguousarray(np.moveaxis(ev_eta, 2, 3)).reshape(-1, nth)
    ev = _centered_expectation(moved, theta_trans).reshape(na, npn, ne, nth)
    return np.ascontiguousarray(np.moveaxis(ev, 3, 2))


@njit(cache=True)
def _p_position(pgrid, p_next):
    n = pgrid.size
    if n == 1 or p_next <= pgrid[0]:
        return 0, 0.0
    if p_next >= pgrid[n - 1]:
        return n - 2, 1.0
    j = np.searchsorted(pgrid, p_next, side="right") - 1
    return j, (p_next - pgrid[j]) / (pgrid[j + 1] - pgrid[j])


@njit(cache=True)
def _best_choice(a, p, wage, phi, surv, age, ev, agrid, pgrid, hours, n_hours,
                 beq, terminal, gamma, nu, L, beta, r, r_p, c_p, c_floor, pension_age,
                 thresholds, rates, cap_rate, w1, w2, w3, part_time):
    """Maximize over (a', s). ``ev`` is (n_a, n_p) for the current theta/eta."""
    g1 = gamma * (1.0 - nu)
    g2 = (1.0 - gamma) * (1.0 - nu)
    inv = 1.0 / (1.0 - nu)
    best = -np.inf
    best_a = -1
    best_s = -1
    best_c = np.nan
    na = agrid.size
    for js in range(n_hours):
        s = hours[js]
        l = L - s - phi
        if l <= 0.0:
            continue
        res, tax, tr = _nb_resources(a, s, wage, p, age, r, r_p, c_p, c_floor, pension_age,
                                     thresholds, rates, cap_rate)
        budget = res - _nb_work_cost(s, age, w1, w2, w3, pension_age, part_time)
        if age < pension_age:
            p_next = p + c_p * s * wage
        else:
            p_next = p
        jp, wp = _p_position(pgrid, p_next)
        logl = np.log(l)
        for ia in range(na):
            c = budget - agrid[ia]
            if c < c_floor - 1e-9:
                break
            u = np.exp(g1 * np.log(c) + g2 * logl) * inv
            if terminal:
                cont = beq[ia]
            else:
                if pgrid.size == 1:
                    evp = ev[ia, 0]
                else:
                    evp = ev[ia, jp] + wp * (ev[ia, jp + 1] - ev[ia, jp])
                cont = surv * evp + (1.0 - surv) * beq[ia]
            v = u + beta * cont
            if v > best or (v == best and (ia < best_a or (ia == best_a and js < best_s))):
                best = v
                best_a = ia
                best_s = js
                best_c = c
    return best, best_a, best_s, best_c


@njit(parallel=True, cache=True)
def _solve_age(age, terminal, EV, agrid, pgrid, hours, n_hours, wage, phi, surv, beq,
               gamma, nu, L, beta, r, r_p, c_p, c_floor, pension_age,
               thresholds, rates, cap_rate, w1, w2, w3, part_time):
    na = agrid.size
    npn = pgrid.size
    nth = wage.shape[2]
    ne = wage.shape[0]
    nx = wage.shape[1]
    total = na * npn * nth * ne * nx
    V = np.empty(total)
    pa = np.empty(total, dtype=np.int64)
    ps = np.empty(total, dtype=np.int64)
    pc = np.empty(total)
    for k in prange(total):
        ix = k % nx
        rest = k // nx
        ie = rest % ne
        rest //= ne
        ith = rest % nth
        rest //= nth
        ip = rest % npn
        ia = rest // npn
        v, ba, bs, c = _best_choice(agrid[ia], pgrid[ip], wage[ie, ix, ith], phi[ie, ix], surv[ie, ix], age,
                                    EV[:, :, ith, ie], agrid, pgrid, hours, n_hours, beq, terminal,
                                    gamma, nu, L, beta, r, r_p, c_p, c_floor, pension_age,
                                    thresholds, rates, cap_rate, w1, w2, w3, part_time)
        V[k] = v
        pa[k] = ba
        ps[k] = bs
        pc[k] = c
    return V, pa, ps, pc


def _kernel_params(params: ModelParams):
    thr, rates, cap = tax_arrays(params.tax)
    w1, w2, w3 = (float(v) for v in params.phi_w)
    return dict(gamma=params.gamma, nu=params.nu, L=params.L, beta=params.beta, r=params.r,
                r_p=params.r_p, c_p=params.c_p, c_floor=params.c_floor,
                pension_age=float(params.pension_age), thresholds=thr, rates=rates, cap_rate=cap,
                w1=w1, w2=w2, w3=w3, part_time=params.part_time_hours)


def _allowed_hours(params: ModelParams, hours: np.ndarray, age: int) -> int:
    return 1 if age >= params.retirement_age else hours.size


@dataclass
class Solution:
    """Values and policies on the grid, indexed ``[t, a, p, theta, eta, eps]``."""

    params: ModelParams
    tables: Tables
    V: np.ndarray
    a_index: np.ndarray
    s_index: np.ndarray
    c: np.ndarray
    EV: np.ndarray | None = None  # [t, a', p', theta, eta] continuation for t < T-1

    @property
    def ages(self) -> np.ndarray:
        return self.tables.ages

    @property
    def a_next(self) -> np.ndarray:
        return self.tables.assets[self.a_index]

    @property
    def hours(self) -> np.ndarray:
        return self.tables.hours[self.s_index]

    def save(self, directory) -> Path:
        """``sol_v1`` bundle: one CSV per age, one row per state index."""
        directory = Path(directory)
        T, na, npn, nth, ne, nx = self.V.shape
        write_bundle_header(directory, "sol_v1", {"shape": list(self.V.shape), "ages": list(self.ages)})
        idx = np.indices((na, npn, nth, ne, nx)).reshape(5, -1)
        for t, age in enumerate(self.ages):
            frame = pd.DataFrame({"state": np.arange(idx.shape[1]), "a": idx[0], "p": idx[1], "theta": idx[2],
                                  "eta": idx[3], "eps": idx[4], "V": self.V[t].ravel(),
                                  "a_next_index": self.a_index[t].ravel(), "s_index": self.s_index[t].ravel(),
                                  "c": self.c[t].ravel()})
            write_frame(directory / f"age_{int(age)}.csv", frame)
        return directory

    @classmethod
    def load(cls, directory, inputs: ModelInputs) -> "Solution":
        directory = Path(directory)
        meta = read_bundle_header(directory, "sol_v1")
        shape = tuple(int(v) for v in meta["shape"].split(","))
        tb = inputs.tables
        if shape != tb.shape:
            raise LoadError(f"{directory}: solution shape {shape} does not match inputs {tb.shape}")
        V = np.empty(shape)
        ai = np.empty(shape, dtype=np.int64)
        si = np.empty(shape, dtype=np.int64)
        c = np.empty(shape)
        for t, age in enumerate(tb.ages):
            f = pd.read_csv(directory / f"age_{int(age)}.csv")
            V[t] = f["V"].to_numpy().reshape(shape[1:])
            ai[t] = f["a_next_index"].to_numpy().reshape(shape[1:])
            si[t] = f["s_index"].to_numpy().reshape(shape[1:])
            c[t] = f["c"].to_numpy().reshape(shape[1:])
        sol = cls(inputs.params, tb, V, ai, si, c)
        sol.EV = _continuations(sol.V, tb)
        return sol


def _continuations(V, tb: Tables) -> np.ndarray:
    T = V.shape[0]
    return np.stack([continuation(V[t + 1], tb.eps_weights[t + 1], tb.eta_trans[t], tb.theta_trans)
                     for t in range(T - 1)]) if T > 1 else np.empty((0,) + V.shape[1:5])


def solve(inputs: ModelInputs) -> Solution:
    """Solve the model by backward induction from the last age."""
    prm = inputs.params
    tb = inputs.tables
    T, na, npn, nth, ne, nx = tb.shape
    kp = _kernel_params(prm)
    beq = np.array([_nb_bequest(a, prm.phi_b, prm.K, prm.nu, prm.gamma) for a in tb.assets])
    V = np.empty(tb.shape)
    ai = np.empty(tb.shape, dtype=np.int64)
    si = np.empty(tb.shape, dtype=np.int64)
    c = np.empty(tb.shape)
    EV_all = np.empty((max(T - 1, 0), na, npn, nth, ne))
    dummy = np.zeros((na, npn, nth, ne))
    for t in range(T - 1, -1, -1):
        age = int(tb.ages[t])
        terminal = t == T - 1
        if terminal:
            EV = dummy
        else:
            EV = continuation(V[t + 1], tb.eps_weights[t + 1], tb.eta_trans[t], tb.theta_trans)
            EV_all[t] = EV
        v, a_idx, s_idx, cc = _solve_age(float(age), terminal, EV, tb.assets, tb.pensions, tb.hours,
                                         _allowed_hours(prm, tb.hours, age),
                                         np.ascontiguousarray(tb.wage[t]), tb.phi_h[t], tb.survival[t],
                                         beq, **kp)
        if np.any(a_idx < 0):
            k = int(np.flatnonzero(a_idx < 0)[0])
            node = np.unravel_index(k, tb.shape[1:])
            raise NumericalError(f"no feasible choice at age {age}, node (a, p, theta, eta, eps) = {node}")
        V[t] = v.reshape(tb.shape[1:])
        ai[t] = a_idx.reshape(tb.shape[1:])
        si[t] = s_idx.reshape(tb.shape[1:])
        c[t] = cc.reshape(tb.shape[1:])
    return Solution(prm, tb, V, ai, si, c, EV_all)


@njit(cache=True)
def _bracket(grid, x):
    """Lower index and weight for linear interpolation, clamped to the hull."""
    n = grid.size
    if n == 1:
        return 0, 0.0, x != grid[0]
    if x <= grid[0]:
        return 0, 0.0, x < grid[0]
    if x >= grid[n - 1]:
        return n - 2, 1.0, x > grid[n - 1]
    j = np.searchsorted(grid, x, side="right") - 1
    return j, (x - grid[j]) / (grid[j + 1] - grid[j]), False


@njit(cache=True)
def _policy_point(t, a, p, ith, ie, ix, s_index, c_pol, agrid, pgrid, hours, wage, phi, age,
                  r, r_p, c_p, c_floor, pension_age, thresholds, rates, cap_rate, w1, w2, w3, part_time, L):
    """Policy at an off-grid (a, p): hours from the nearest node, consumption
    interpolated bilinearly, next assets from the budget identity.

    Returns (a_next, s, c, tax, tr, resources, work_cost, clamped).
    """
    ja, wa, ca = _bracket(agrid, a)
    jp, wp, cp = _bracket(pgrid, p)
    na_ = ja + 1 if (wa >= 0.5 and agrid.size > 1) else ja
    np_ = jp + 1 if (wp >= 0.5 and pgrid.size > 1) else jp
    s = hours[s_index[t, na_, np_, ith, ie, ix]]
    ja1 = ja + 1 if agrid.size > 1 else ja
    jp1 = jp + 1 if pgrid.size > 1 else jp
    c00 = c_pol[t, ja, jp, ith, ie, ix]
    c10 = c_pol[t, ja1, jp, ith, ie, ix]
    c01 = c_pol[t, ja, jp1, ith, ie, ix]
    c11 = c_pol[t, ja1, jp1, ith, ie, ix]
    c_int = (1 - wa) * (1 - wp) * c00 + wa * (1 - wp) * c10 + (1 - wa) * wp * c01 + wa * wp * c11
    if wa == 0.0 and wp == 0.0:
        c_int = c00
    a_max = agrid[agrid.size - 1]
    for attempt in range(2):
        if attempt == 1:
            s = 0.0
        if L - s - phi <= 0.0:
            continue
        res, tax, tr = _nb_resources(a, s, wage, p, age, r, r_p, c_p, c_floor, pension_age,
                                     thresholds, rates, cap_rate)
        wc = _nb_work_cost(s, age, w1, w2, w3, pension_age, part_time)
        budget = res - wc
        c = c_int
        a_next = budget - c
        if a_next < 0.0:
            a_next = 0.0
            c = budget
        elif a_next > a_max:
            a_next = a_max
            c = budget - a_max
        if c >= c_floor - 1e-9:
            return a_next, s, c, tax, tr, res, wc, ca or cp
    # s = 0 with a' = 0 always gives c = resources >= floor; reached only if leisure fails
    return np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, True


def policy_eval(solution: Solution, age: int, a: float, p: float, theta: int, eta: int, eps: int) -> dict:
    """Policy ``(a_next, s, c)`` at one state; continuous dimensions interpolated.

    States outside the asset or pension grid are clamped for the
    interpolation (``clamped`` is set) while the budget uses the actual values.
    """
    tb = solution.tables
    t = int(np.flatnonzero(tb.ages == age)[0]) if np.any(tb.ages == age) else None
    if t is None:
        raise KeyError(f"age {age} outside the solution")
    kp = _kernel_params(solution.params)
    kp.pop("gamma"); kp.pop("nu"); kp.pop("beta")
    out = _policy_point(t, float(a), float(p), int(theta), int(eta), int(eps), solution.s_index, solution.c,
                        tb.assets, tb.pensions, tb.hours, tb.wage[t, eta, eps, theta], tb.phi_h[t, eta, eps],
                        float(age), **kp)
    keys = ("a_next", "s", "c", "tax", "tr", "resources", "work_cost", "clamped")
    return dict(zip(keys, out))


@njit(cache=True)
def _point_value(a, p, wage, phi, surv, age, ev, agrid, pgrid, hours, n_hours, beq, terminal,
                 gamma, nu, L, beta, r, r_p, c_p, c_floor, pension_age,
                 thresholds, rates, cap_rate, w1, w2, w3, part_time):
    v, _, _, _ = _best_choice(a, p, wage, phi, surv, age, ev, agrid, pgrid, hours, n_hours, beq, terminal,
                              gamma, nu, L, beta, r, r_p, c_p, c_floor, pension_age,
                              thresholds, rates, cap_rate, w1, w2, w3, part_time)
    return v


def bellman_value(solution: Solution, t: int, a: float, p: float, theta: int, eta: int, eps: int,
                  ev: np.ndarray | None = None) -> float:
    """Exact Bellman maximum at an off-grid asset level.

    ``ev`` overrides the continuation table ``(n_a, n_p)`` for this
    ``(theta, eta)``; by default the solution's own continuation is used.
    """
    tb = solution.tables
    prm = solution.params
    T = tb.ages.size
    age = int(tb.ages[t])
    terminal = t == T - 1
    if ev is None:
        ev = solution.EV[t, :, :, theta, eta] if not terminal else np.zeros((tb.assets.size, tb.pensions.size))
    beq = np.array([_nb_bequest(x, prm.phi_b, prm.K, prm.nu, prm.gamma) for x in tb.assets])
    return float(_point_value(float(a), float(p), tb.wage[t, eta, eps, theta], tb.phi_h[t, eta, eps],
                              tb.survival[t, eta, eps], float(age), np.ascontiguousarray(ev), tb.assets,
                              tb.pensions, tb.hours, _allowed_hours(prm, tb.hours, age), beq, terminal,
                              **_kernel_params(prm)))
