"""Per-age primitive tables consumed by the solver and the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from ..earnings import EarningsProcess
from ..health_dynamics.discrete import DiscreteHealthProcess
from ..mortality import weighted_quantiles
from .params import ModelParams, StateGrid

CHANNELS = ("mortality", "time_cost", "wages")


@dataclass(frozen=True)
class Tables:
    """Dense arrays indexed by age position ``t`` (see ``ModelInputs.tables``)."""

    ages: np.ndarray          # (T,)
    assets: np.ndarray        # (n_a,)
    pensions: np.ndarray      # (n_p,)
    hours: np.ndarray         # (n_s,)
    eta: np.ndarray           # (T, n_eta) persistent level incl. offset
    health: np.ndarray        # (T, n_eta, n_eps) total health level
    eps_weights: np.ndarray   # (T, n_eps)
    eta_trans: np.ndarray     # (T-1, n_eta, n_eta)
    eta_init: np.ndarray      # (n_eta,)
    theta: np.ndarray         # (n_theta,)
    theta_trans: np.ndarray   # (n_theta, n_theta)
    theta_init: np.ndarray    # (n_theta,)
    wage: np.ndarray          # (T, n_eta, n_eps, n_theta) hourly offer
    phi_h: np.ndarray         # (T, n_eta, n_eps) hours lost to ill health
    survival: np.ndarray      # (T, n_eta, n_eps) prob. of reaching t+1 (0 at T)
    eta_offset: np.ndarray | None = None  # (T,) offset included in ``eta``

    @property
    def shape(self) -> tuple:
        return (self.ages.size, self.assets.size, self.pensions.size, self.theta.size,
                self.eta.shape[1], self.eps_weights.shape[1])


@dataclass(frozen=True)
class ModelInputs:
    """Everything needed to solve and simulate one model instance.

    Parameters
    ----------
    health : annual DiscreteHealthProcess on the grid's ages
    earnings : EarningsProcess (biennial estimates are annualized here)
    mortality : object with ``death_prob(age, h)``, a callable, or None for no mortality
    pinned : channel -> per-age health level at which that channel is evaluated
    """

    params: ModelParams
    health: DiscreteHealthProcess
    earnings: EarningsProcess
    mortality: object = None
    grid: StateGrid = field(default_factory=StateGrid)
    pinned: dict = field(default_factory=dict)

    def __post_init__(self):
        ages = self.grid.ages
        if self.health.period != 1:
            raise ValueError("health process must be annual (use annualize)")
        if self.health.ages.size != ages.size or np.any(self.health.ages != ages):
            raise ValueError(f"health process ages {self.health.ages[0]}..{self.health.ages[-1]} "
                             f"do not match model ages {ages[0]}..{ages[-1]}")
        if self.health.n_eta != self.grid.n_eta or self.health.n_eps != self.grid.n_eps:
            raise ValueError("health process grid sizes differ from the state grid")
        unknown = set(self.pinned) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channel(s) {sorted(unknown)}")

    def _death(self, age: int, h: np.ndarray) -> np.ndarray:
        if self.mortality is None:
            return np.zeros_like(h)
        fn = getattr(self.mortality, "death_prob", self.mortality)
        return np.asarray(fn(int(age), h), float) * np.ones_like(h)

    @cached_property
    def tables(self) -> Tables:
        g, hp, prm = self.grid, self.health, self.params
        ages = g.ages
        T = ages.size
        earn = self.earnings.to_annual() if self.earnings.period != 1 else self.earnings
        earn = replace(earn, n_theta=g.n_theta)
        theta, theta_trans, theta_init = earn.theta_chain()
        spline = prm.time_cost()
        health = np.stack([hp.levels(k) for k in range(T)])
        eta = hp.eta_grids + hp.offsets[:, None]
        wage = np.empty((T, g.n_eta, g.n_eps, g.n_theta))
        phi_h = np.empty((T, g.n_eta, g.n_eps))
        survival = np.empty((T, g.n_eta, g.n_eps))
        for t, age in enumerate(ages):
            h = health[t]
            pin = {ch: np.full_like(h, v[t]) for ch, v in self.pinned.items()}
            hw = pin.get("wages", h)
            wage[t] = earn.wage_offer(hw[..., None], age, theta)
            if age >= prm.retirement_age:
                wage[t] = 0.0
            phi_h[t] = spline(pin.get("time_cost", h))
            survival[t] = 0.0 if t == T - 1 else 1.0 - self._death(age, pin.get("mortality", h))
        return Tables(ages=ages, assets=g.asset_grid(), pensions=g.pension_grid(), hours=g.hours_grid(),
                      eta=eta, health=health, eps_weights=hp.eps_weights, eta_trans=hp.trans,
                      eta_init=hp.init, theta=theta, theta_trans=theta_trans, theta_init=theta_init,
                      wage=wage, phi_h=phi_h, survival=survival,
                      eta_offset=np.asarray(hp.offsets, float))

    def survivor_health_quantile(self, q: float) -> np.ndarray:
        """Per-age ``q`` quantile of health among survivors (mass propagation)."""
        tb = self.tables
        mass = tb.eta_init.copy()
        out = np.empty(tb.ages.size)
        for t in range(tb.ages.size):
            joint = mass[:, None] * tb.eps_weights[t][None, :]
            out[t] = weighted_quantiles(tb.health[t].ravel(), joint.ravel(), [q])[0]
            if t < tb.ages.size - 1:
                alive = (joint * tb.survival[t]).sum(axis=1)
                mass = alive @ tb.eta_trans[t]
        return out

    def neutralize(self, channels, percentile: float) -> "ModelInputs":
        """Copy with each channel evaluated at the ``percentile`` of survivor health by age."""
        channels = tuple(channels)
        if not 0 < percentile < 1:
            raise ValueError("percentile must lie in (0, 1)")
        bad = set(channels) - set(CHANNELS)
        if bad:
            raise ValueError(f"unknown channel(s) {sorted(bad)}")
        if not channels:
            return self
        level = self.survivor_health_quantile(percentile)
        pinned = {**self.pinned, **{ch: level for ch in channels}}
        return replace(self, pinned=pinned)

    def with_params(self, params: ModelParams) -> "ModelInputs":
        return replace(self, params=params)
