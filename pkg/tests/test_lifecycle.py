from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from healthdyn.errors import LoadError
from healthdyn.lifecycle import (DomainError, ModelParams, Solution, StateGrid, TaxSchedule, TimeCostSpline,
                                 bequest, net_resources, policy_eval, solve, time_cost, utility, work_cost)
from healthdyn.simulation import simulate_histories

from oracles import backward_values, enumerate_paths, tiny_inputs

P = ModelParams()


# primitives --------------------------------------------------------------------

def test_utility_values():
    assert utility(1.0, 1.0, 0.378, 4.0) == pytest.approx(-1 / 3, abs=1e-12)
    assert utility(2.0, 1.0, 0.378, 4.0) == pytest.approx(-(2**-1.134) / 3, abs=1e-12)
    assert float(utility(2.0, 1.0, 0.378, 4.0)) == pytest.approx(-0.1519, abs=1e-4)


def test_utility_domain():
    with pytest.raises(DomainError):
        utility(0.0, 1.0, 0.4, 4.0)
    with pytest.raises(DomainError):
        utility(1.0, -1.0, 0.4, 4.0)
    with pytest.raises(DomainError):
        utility(1.0, 1.0, 0.4, 1.0)
    with pytest.raises(ValueError):
        ModelParams(nu=1.0)


@given(st.floats(1.0, 1e6), st.floats(1.0, 1e6), st.floats(1.0, 4000.0))
def test_utility_increasing(c, dc, l):
    assert utility(c + dc, l, 0.378, 4.0) > utility(c, l, 0.378, 4.0)
    assert utility(c, l + 1.0, 0.378, 4.0) > utility(c, l, 0.378, 4.0)


def test_bequest_cases():
    assert bequest(1e5, 0.0, 533219.0, 4.0, 0.378) == 0.0
    b0 = bequest(0.0, 0.042, 533219.0, 4.0, 0.378)
    assert b0 == pytest.approx(0.042 * 533219.0 ** (-3 * 0.378) / -3)
    assert np.isfinite(b0) and b0 < 0
    assert bequest(1e5, 0.042, 533219.0, 4.0, 0.378) > b0
    with pytest.raises(DomainError):
        bequest(1.0, 0.042, 0.0, 4.0, 0.378)
    with pytest.raises(DomainError):
        bequest(-1.0, 0.042, 1.0, 4.0, 0.378)


def test_time_cost_knots():
    spline = P.time_cost()
    k = P.h_knots
    assert time_cost(k[-1], spline) == 0.0
    assert time_cost(k[0], spline) == 4879.0
    assert time_cost(k[1], spline) == 2312.5
    val, clamped = time_cost(np.array([k[0] - 1, 0.0, k[-1] + 1]), spline, return_clamped=True)
    assert clamped.tolist() == [True, False, True]
    assert val[0] == 4879.0 and val[2] == 0.0


@pytest.mark.parametrize("kind", ["linear", "cubic"])
def test_time_cost_monotone(kind):
    spline = TimeCostSpline(P.h_knots, P.phi_h, kind)
    y = spline(np.linspace(P.h_knots[0], P.h_knots[-1], 500))
    assert np.all(np.diff(y) <= 1e-9)


def test_time_cost_validation():
    with pytest.raises(ValueError):
        TimeCostSpline((0, 1, 1, 2, 3), (1, 1, 1, 1))
    with pytest.raises(ValueError):
        ModelParams(phi_h=(5000.0, 1.0, 1.0, 1.0))


def test_work_cost_cases():
    w = P.phi_w
    assert work_cost(0.0, 60, w) == 0.0
    assert work_cost(1000.0, 60, w) == pytest.approx(3585.0 + 32.8 * 60)
    assert work_cost(1000.0, 66, w) == pytest.approx(3585.0 + 32.8 * 66)
    assert work_cost(2000.0, 66, w) == pytest.approx(3585.0 + 32.8 * 66 + 2.8 * 2000)
    assert work_cost(2000.0, 64, w) == pytest.approx(3585.0 + 32.8 * 64)
    with pytest.raises(DomainError):
        work_cost(-1.0, 60, w)


def test_net_resources_cases():
    notax = replace(P, tax=TaxSchedule.zero())
    res, tax, tr = net_resources(0.0, 0.0, 10.0, 0.0, 60, notax)
    assert (res, tax, tr) == (P.c_floor, 0.0, P.c_floor)
    res, _, tr = net_resources(10_000.0, 1000.0, 10.0, 5000.0, 60, notax)
    assert tr == 0 and res == pytest.approx(10_000 * 1.02 + 1000 * 10 * 0.94)
    res, _, _ = net_resources(0.0, 0.0, 0.0, 100_000.0, 65, notax)
    assert res == pytest.approx(100_000 * P.r_p)
    res, tax, _ = net_resources(0.0, 1000.0, 50.0, 0.0, 60, P)
    labor = 50_000 * 0.94
    assert tax == pytest.approx(0.22 * (35_000 - 4615) + 0.40 * (labor - 35_000))
    assert res == pytest.approx(labor - tax)


# solver against brute force -----------------------------------------------------

@pytest.mark.parametrize("first_age", [62, 64, 68])
def test_matches_backward_oracle(first_age):
    inp = tiny_inputs(first_age)
    sol = solve(inp)
    V = backward_values(inp)
    np.testing.assert_allclose(sol.V, V, rtol=1e-12, atol=0)


def test_matches_path_enumeration():
    inp = tiny_inputs(62, stochastic=False, n_assets=5)
    sol = solve(inp)
    np.testing.assert_allclose(sol.V[0, :, 0, 0, 0, 0], enumerate_paths(inp), rtol=1e-12, atol=0)


def test_value_monotone_in_assets(reduced_solution):
    assert np.all(np.diff(reduced_solution.V, axis=1) >= 0)


def test_work_ban_after_seventy(reduced_solution):
    ages = reduced_solution.ages
    assert np.all(reduced_solution.hours[ages >= 70] == 0)


def test_consumption_floor_in_policy(reduced_solution):
    assert np.nanmin(reduced_solution.c) >= reduced_solution.params.c_floor - 1e-9


def test_higher_fixed_cost_lowers_participation(reduced_inputs, reduced_solution):
    base = simulate_histories(reduced_solution, 3000, seed=2)
    w = reduced_inputs.params.phi_w
    costly = reduced_inputs.with_params(replace(reduced_inputs.params, phi_w=(10 * w[0],) + tuple(w[1:])))
    alt = simulate_histories(solve(costly), 3000, seed=2)
    work = lambda hist: np.nanmean(np.where(hist.alive[:, :15], hist.s[:, :15] > 0, np.nan))  # noqa: E731
    assert work(alt) < work(base)


def test_policy_at_nodes_matches_tables(reduced_solution):
    sol = reduced_solution
    tb = sol.tables
    for t, ia, ip, ith, ie, ix in [(0, 5, 1, 1, 4, 1), (10, 0, 0, 0, 0, 0), (15, 12, 2, 2, 8, 2), (25, 3, 1, 0, 2, 1)]:
        out = policy_eval(sol, int(tb.ages[t]), tb.assets[ia], tb.pensions[ip], ith, ie, ix)
        assert out["s"] == sol.hours[t, ia, ip, ith, ie, ix]
        assert out["c"] == pytest.approx(sol.c[t, ia, ip, ith, ie, ix], rel=1e-12)
        assert out["a_next"] == pytest.approx(sol.a_next[t, ia, ip, ith, ie, ix], rel=1e-9, abs=1e-6)
        assert not out["clamped"]


def test_policy_between_nodes(reduced_solution):
    sol = reduced_solution
    tb = sol.tables
    t, ip, ith, ie, ix = 5, 1, 1, 4, 1
    for ia in range(3, 10):
        a = 0.5 * (tb.assets[ia] + tb.assets[ia + 1])
        out = policy_eval(sol, int(tb.ages[t]), a, tb.pensions[ip], ith, ie, ix)
        lo, hi = sorted(sol.c[t, ia:ia + 2, ip, ith, ie, ix])
        assert out["c"] >= min(lo, out["resources"] - out["work_cost"] - tb.assets[-1]) - 1e-9
        assert out["c"] <= max(hi, out["resources"] - out["work_cost"]) + 1e-9
        assert out["c"] >= sol.params.c_floor - 1e-9
    far = policy_eval(sol, int(tb.ages[t]), 2 * tb.assets[-1], tb.pensions[ip], ith, ie, ix)
    assert far["clamped"]
    old = policy_eval(sol, 75, 1e5, 0.0, 0, 0, 0)
    assert old["s"] == 0
    with pytest.raises(KeyError):
        policy_eval(sol, 49, 0.0, 0.0, 0, 0, 0)


def test_solution_round_trip(tmp_path):
    inp = tiny_inputs(62)
    sol = solve(inp)
    back = Solution.load(sol.save(tmp_path / "sol"), inp)
    np.testing.assert_array_equal(back.s_index, sol.s_index)
    np.testing.assert_allclose(back.V, sol.V, rtol=1e-15)
    with pytest.raises(LoadError, match="shape"):
        Solution.load(tmp_path / "sol", tiny_inputs(62, stochastic=False))


def test_grid_validation():
    with pytest.raises(ValueError):
        StateGrid(assets=(1.0, 2.0))
    with pytest.raises(ValueError):
        StateGrid(hours=(500.0, 1000.0))
