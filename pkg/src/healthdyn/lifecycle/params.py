"""Life-cycle model parameters, tax schedule, time-cost spline and state grids."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..io import parse_float_list, read_keyed, write_keyed

#: Estimated columns of the parameter table (nonlinear and canonical health).
PARAM_DEFAULTS = {
    "nonlinear": dict(gamma=0.378, phi_b=0.042, K=533219.0, phi_h=(4879.0, 2312.5, 1409.0, 1401.9),
                      phi_w=(3585.0, 32.8, 2.8)),
    "canonical": dict(gamma=0.379, phi_b=0.044, K=533219.0, phi_h=(4878.5, 2403.5, 1412.1, 1402.0),
                      phi_w=(3597.9, 32.9, 2.9)),
}
HEALTH_KNOTS = (-0.633, -0.170, 0.340)


@dataclass(frozen=True)
class TaxSchedule:
    """Marginal ``rates[b]`` apply to non-capital income above ``thresholds[b]``;
    capital income pays ``capital_rate``."""

    thresholds: tuple = (4615.0, 35000.0)
    rates: tuple = (0.22, 0.40)
    capital_rate: float = 0.20

    def __post_init__(self):
        if len(self.thresholds) != len(self.rates):
            raise ValueError("one rate per threshold")
        if any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must increase")
        if any(not 0 <= r < 1 for r in self.rates) or not 0 <= self.capital_rate < 1:
            raise ValueError("tax rates must lie in [0, 1)")

    @classmethod
    def zero(cls) -> "TaxSchedule":
        return cls(thresholds=(0.0,), rates=(0.0,), capital_rate=0.0)

    def __call__(self, labor_income, capital_income):
        y = np.asarray(labor_income, float)
        thr = np.asarray(self.thresholds, float)
        upper = np.r_[thr[1:], np.inf]
        seg = np.clip(y[..., None] - thr, 0.0, upper - thr)
        return seg @ np.asarray(self.rates, float) + self.capital_rate * np.maximum(capital_income, 0.0)


@dataclass(frozen=True)
class TimeCostSpline:
    """Hours lost to ill health on knots ``(h_min, h20, h30, h50, h_max)``.

    ``values`` holds the cost at the first four knots; the cost at ``h_max``
    is zero. Linear interpolation by default, monotone cubic with ``kind='cubic'``.
    """

    knots: tuple
    values: tuple
    kind: str = "linear"

    def __post_init__(self):
        if len(self.knots) != 5 or len(self.values) != 4:
            raise ValueError("five knots and four knot values are required")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if self.kind not in ("linear", "cubic"):
            raise ValueError("kind must be 'linear' or 'cubic'")

    @property
    def y(self) -> np.ndarray:
        return np.r_[np.asarray(self.values, float), 0.0]

    def __call__(self, h, return_clamped: bool = False):
        h = np.asarray(h, float)
        x = np.asarray(self.knots, float)
        clamped = (h < x[0]) | (h > x[-1])
        hc = np.clip(h, x[0], x[-1])
        if self.kind == "linear":
            out = np.interp(hc, x, self.y)
        else:
            out = PchipInterpolator(x, self.y)(hc)
        if return_clamped:
            return out, clamped
        return out


@dataclass(frozen=True)
class ModelParams:
    # calibrated
    L: float = 4880.0
    c_floor: float = 1660.0
    nu: float = 4.0
    r_p: float = 0.0378
    c_p: float = 0.06
    beta: float = 0.9756
    r: float = 0.02
    # estimated (nonlinear column)
    gamma: float = 0.378
    phi_b: float = 0.042
    K: float = 533219.0
    phi_h: tuple = PARAM_DEFAULTS["nonlinear"]["phi_h"]
    phi_w: tuple = PARAM_DEFAULTS["nonlinear"]["phi_w"]
    # health knots: h_min, h20, h30, h50, h_max
    h_knots: tuple = (-3.5,) + HEALTH_KNOTS + (2.5,)
    spline_kind: str = "linear"
    tax: TaxSchedule = field(default_factory=TaxSchedule)
    pension_age: int = 65
    retirement_age: int = 70
    part_time_hours: float = 1250.0

    def __post_init__(self):
        if self.nu == 1:
            raise ValueError("nu = 1 (log utility) is not supported")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.K <= 0:
            raise ValueError("K must be positive")
        if any(not 0 <= v < self.L for v in self.phi_h):
            raise ValueError("time-cost values must lie in [0, L)")
        if len(self.phi_w) != 3:
            raise ValueError("three cost-of-work parameters are required")

    @classmethod
    def defaults(cls, variant: str = "nonlinear", **overrides) -> "ModelParams":
        return cls(**{**PARAM_DEFAULTS[variant], **overrides})

    def time_cost(self) -> TimeCostSpline:
        return TimeCostSpline(tuple(self.h_knots), tuple(self.phi_h), self.spline_kind)

    def with_values(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    # keyed-text IO ------------------------------------------------------------
    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "tax"}
        d["tax_thresholds"] = self.tax.thresholds
        d["tax_rates"] = self.tax.rates
        d["tax_capital_rate"] = self.tax.capital_rate
        return d

    def save(self, path) -> None:
        write_keyed(path, "params_v1", self.to_dict())

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_strings(read_keyed(path, "params_v1"))

    @classmethod
    def from_strings(cls, raw: dict) -> "ModelParams":
        kw = {}
        tuples = {"phi_h", "phi_w", "h_knots"}
        for f in fields(cls):
            if f.name == "tax" or f.name not in raw:
                continue
            v = raw[f.name]
            if f.name in tuples:
                kw[f.name] = tuple(parse_float_list(v))
            elif f.name == "spline_kind":
                kw[f.name] = v
            elif f.name in ("pension_age", "retirement_age"):
                kw[f.name] = int(v)
            else:
                kw[f.name] = float(v)
        if "tax_thresholds" in raw:
            kw["tax"] = TaxSchedule(tuple(parse_float_list(raw["tax_thresholds"])),
                                    tuple(parse_float_list(raw["tax_rates"])),
                                    float(raw["tax_capital_rate"]))
        return cls(**kw)


@dataclass(frozen=True)
class StateGrid:
    n_assets: int = 30
    a_max: float = 1_500_000.0
    a_curvature: float = 2.5
    n_pension: int = 6
    p_max: float = 250_000.0
    n_theta: int = 5
    n_eta: int = 19
    n_eps: int = 5
    hours: tuple = (0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0)
    first_age: int = 50
    last_age: int = 85
    assets: tuple | None = None

    def __post_init__(self):
        a = self.asset_grid()
        if a[0] != 0 or np.any(np.diff(a) <= 0):
            raise ValueError("asset grid must start at 0 and increase strictly")
        if self.n_pension < 1 or np.any(np.diff(self.hours) <= 0) or self.hours[0] != 0:
            raise ValueError("hours must start at 0 and increase")

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "StateGrid":
        return cls(n_eta=24 if variant == "canonical" else 19, **kw)

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.first_age, self.last_age + 1)

    def asset_grid(self) -> np.ndarray:
        if self.assets is not None:
            return np.asarray(self.assets, float)
        u = np.linspace(0.0, 1.0, self.n_assets)
        return self.a_max * u**self.a_curvature

    def pension_grid(self) -> np.ndarray:
        if self.n_pension == 1:
            return np.zeros(1)
        return np.linspace(0.0, self.p_max, self.n_pension)

    def hours_grid(self) -> np.ndarray:
        return np.asarray(self.hours, float)
