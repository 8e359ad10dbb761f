import numpy as np
import pandas as pd
import pytest

from healthdyn.errors import ConfigError
from healthdyn.lifecycle import ModelParams, solve
from healthdyn.simulation import compute_moments, simulate_histories
from healthdyn.smm import (SmmConfig, data_moments, diagonal_weights, get_param, loss, minimize,
                           moment_objective, set_params)


def _m(values):
    return pd.DataFrame({"moment_id": list(values), "value": list(values.values())})


def test_loss_examples():
    assert loss(_m({"a": 1.0, "b": 2.0}), _m({"a": 0.0, "b": 4.0})) == 5.0
    w = pd.Series({"a": 2.0, "b": 0.5})
    assert loss(_m({"a": 1.0, "b": 2.0}), _m({"a": 0.0, "b": 4.0}), w) == 4.0
    val, skipped = loss(_m({"a": 1.0, "b": np.nan}), _m({"a": 3.0, "b": 4.0, "c": 1.0}), return_skipped=True)
    assert (val, skipped) == (4.0, 2)
    assert loss(_m({"a": 1.0}), _m({"a": 1.0})) == 0.0
    with pytest.raises(ValueError, match="share no"):
        loss(_m({"a": 1.0}), _m({"b": 1.0}))


def test_diagonal_weights_are_relative():
    w = diagonal_weights(_m({"a": 2.0, "b": -0.5, "c": 0.0}))
    assert w["a"] == 0.25 and w["b"] == 4.0 and np.isfinite(w["c"])
    assert loss(_m({"a": 2.2, "b": -0.55}), _m({"a": 2.0, "b": -0.5}), w) == pytest.approx(0.02)


def test_parameter_mapping():
    p = set_params(ModelParams(), {"gamma": 0.4, "phi_h2": 2000.0, "phi_w3": 3.0})
    assert p.gamma == 0.4 and p.phi_h[1] == 2000.0 and p.phi_w == (3585.0, 32.8, 3.0)
    assert get_param(p, "phi_h2") == 2000.0
    with pytest.raises(ConfigError, match="sigma"):
        set_params(p, {"sigma": 1.0})


def test_config_validation():
    with pytest.raises(ConfigError, match="no bounds"):
        SmmConfig(free=("gamma", "K"), bounds={"gamma": (0.2, 0.6)})
    with pytest.raises(ConfigError):
        SmmConfig(bounds={"gamma": (0.6, 0.2)})
    with pytest.raises(ConfigError, match="time endowment"):
        SmmConfig(free=("phi_h1",), bounds={"phi_h1": (0.0, 5000.0)})
    with pytest.raises(ConfigError, match="outside"):
        SmmConfig(start={"gamma": 0.9})
    with pytest.raises(ConfigError):
        SmmConfig(weighting="optimal")


QUAD_CFG = SmmConfig(free=("gamma", "phi_b"), bounds={"gamma": (0.0, 1.0), "phi_b": (-2.0, 2.0)},
                     n_starts=2, seed=3)


def _quad(v):
    return (v["gamma"] - 0.3) ** 2 + 4 * (v["phi_b"] - 0.7) ** 2


def test_finds_quadratic_minimum():
    est = minimize(_quad, QUAD_CFG)
    assert abs(est.values["gamma"] - 0.3) < 1e-3
    assert abs(est.values["phi_b"] - 0.7) < 1e-3
    assert est.converged and not est.messages


def test_search_is_deterministic():
    a, b = minimize(_quad, QUAD_CFG), minimize(_quad, QUAD_CFG)
    pd.testing.assert_frame_equal(a.trace, b.trace)
    assert a.values == b.values


def test_incumbent_never_worsens():
    tr = minimize(_quad, QUAD_CFG).trace
    assert np.all(np.diff(tr.best_loss) <= 0)
    assert tr.best_loss.iloc[-1] == tr.loss.min()


def test_budget_exhaustion_warns():
    cfg = SmmConfig(free=("gamma",), bounds={"gamma": (0.0, 1.0)}, max_evals=5)
    with pytest.warns(UserWarning, match="budget"):
        est = minimize(lambda v: (v["gamma"] - 0.3) ** 2, cfg)
    assert not est.converged and est.n_evals == 5
    assert est.loss == est.trace.loss.min()


def test_bounds_are_respected():
    seen = []

    def fn(v):
        seen.append(v["gamma"])
        return -v["gamma"]  # pushes into the upper bound

    est = minimize(fn, SmmConfig(free=("gamma",), bounds={"gamma": (0.2, 0.6)}, n_starts=2))
    assert min(seen) >= 0.2 and max(seen) <= 0.6
    assert est.values["gamma"] == pytest.approx(0.6, abs=1e-3)


def test_invalid_parameters_score_infinite():
    est = minimize(lambda v: ModelParams(gamma=v["gamma"]) and (v["gamma"] - 0.5) ** 2,
                   SmmConfig(free=("gamma",), bounds={"gamma": (0.0, 1.0)}, n_starts=1))
    assert np.isinf(est.trace.loss[est.trace.gamma <= 0]).all()
    assert abs(est.values["gamma"] - 0.5) < 1e-3


def test_panel_moments_layout(panel):
    d = data_moments(panel.data.assign(h=panel.truth.h_true.to_numpy()))
    assert len(d) == 135
    assert (d.kind == "participation").sum() == 80


def test_objective_zero_at_own_moments(reduced_inputs):
    cfg = SmmConfig(n_histories=400, sim_seed=5)
    fn = moment_objective(reduced_inputs, pd.DataFrame({"moment_id": ["x"], "value": [0.0]}), cfg)
    with pytest.raises(ValueError):
        fn({"gamma": 0.378})
    own = compute_moments(simulate_histories(solve(reduced_inputs), 400, seed=5))
    assert moment_objective(reduced_inputs, own, cfg)({"gamma": reduced_inputs.params.gamma}) == 0.0
