"""Life-cycle model: parameters, primitives, solver."""

from .inputs import CHANNELS, ModelInputs, Tables
from .params import PARAM_DEFAULTS, ModelParams, StateGrid, TaxSchedule, TimeCostSpline
from .primitives import DomainError, bequest, net_resources, time_cost, utility, work_cost
from .solver import Solution, bellman_value, continuation, policy_eval, solve

__all__ = [
    "CHANNELS", "ModelInputs", "Tables", "PARAM_DEFAULTS", "ModelParams", "StateGrid", "TaxSchedule",
    "TimeCostSpline", "DomainError", "bequest", "net_resources", "time_cost", "utility", "work_cost",
    "Solution", "bellman_value", "continuation", "policy_eval", "solve",
]
