import numpy as np
import pandas as pd
import pytest

from healthdyn.earnings import (WAGE_DEFAULTS, EarningsProcess, estimate_earnings_process, health_basis,
                                simulate_earnings, simulate_wage_panel, wage_offer)
from healthdyn.errors import IdentificationError
from healthdyn.markov import chain_autocorrelation

E = EarningsProcess()


def test_recovers_stochastic_part():
    fit = estimate_earnings_process(simulate_wage_panel(E, 20_000, seed=4))
    p = fit.process
    assert abs(p.rho - WAGE_DEFAULTS["rho"]) < 0.05
    for name in ("sigma2_nu", "sigma2_ups", "sigma2_0"):
        assert abs(getattr(p, name) - WAGE_DEFAULTS[name]) < 0.03


def test_noise_free_wages_recover_profile():
    r = np.random.default_rng(0)
    n, w = 5000, 6
    h = r.normal(size=(n, w))
    ages = np.tile(50 + 2 * np.arange(w), (n, 1))
    df = pd.DataFrame({"person_id": np.repeat(np.arange(n), w), "age": ages.ravel(),
                       "hourly_wage": E.wage_offer(h, ages).ravel(), "h": h.ravel()})
    p = estimate_earnings_process(df, knots=E.knots).process
    np.testing.assert_allclose(p.age_coef, E.age_coef, atol=1e-6)
    np.testing.assert_allclose(p.h_slopes, E.h_slopes, atol=1e-6)
    assert max(p.sigma2_nu, p.sigma2_ups, p.sigma2_0) < 1e-6


def test_independent_draws_give_zero_persistence():
    proc = EarningsProcess(rho=0.0, sigma2_nu=0.1, sigma2_0=0.1, sigma2_ups=0.05)
    p = estimate_earnings_process(simulate_wage_panel(proc, 20_000, seed=1)).process
    # with rho = 0 the persistent and transitory variances are not separately identified
    assert abs(p.rho) < 0.05 or p.sigma2_nu < 0.02


def test_too_few_waves():
    with pytest.raises(IdentificationError, match="three waves"):
        estimate_earnings_process(simulate_wage_panel(E, 500, n_waves=2, first_ages=(50, 51)))


def test_offer_rules():
    h = np.linspace(-3, 2, 41)
    w = wage_offer(E, h, 60)
    assert (w > 0).all()
    assert np.all(np.diff(w) >= 0)
    assert wage_offer(E, 0.1, 70) == 0.0
    assert wage_offer(E, 0.1, 69, theta=0.2) == pytest.approx(np.exp(E.omega(0.1, 69) + 0.2))


def test_health_profile_is_piecewise_linear():
    for k in E.knots:
        lo, hi = E.omega(np.array([k - 1e-7, k + 1e-7]), 55)
        assert abs(hi - lo) < 1e-6
    segments = np.r_[-3.0, E.knots, 3.0]
    for a, b, s in zip(segments[:-1], segments[1:], E.h_slopes):
        x = np.linspace(a, b, 5)
        assert np.allclose(np.diff(E.omega(x, 55)) / np.diff(x), s)


def test_bad_parameters():
    with pytest.raises(ValueError):
        EarningsProcess(rho=1.0)
    with pytest.raises(ValueError):
        EarningsProcess(h_slopes=(0.1, -0.1, 0.0, 0.0))
    with pytest.raises(ValueError):
        EarningsProcess(knots=(0.0, 0.0, 1.0))


def test_simulated_mean_wage():
    ages = np.arange(50, 70)
    h = np.zeros((40_000, ages.size))
    sim = simulate_earnings(E, h, ages, seed=2)
    ann = E.to_annual()
    grid, trans, init = ann.theta_chain()
    # exact mean of exp(theta) along the chain
    dist, expected = init.copy(), []
    for _ in ages:
        expected.append(dist @ np.exp(grid))
        dist = dist @ trans
    expected = np.exp(E.omega(0.0, ages)) * np.array(expected)
    np.testing.assert_allclose(sim.wages.mean(axis=0), expected, rtol=0.03)


def test_annual_chain_matches_biennial_law():
    ann = E.to_annual()
    grid, trans, _ = ann.theta_chain()
    assert abs(chain_autocorrelation(grid, trans) ** 2 - E.rho) < 0.03
    assert np.abs(trans.sum(axis=1) - 1).max() < 1e-12


def test_simulation_is_seeded():
    h = np.zeros((100, 5))
    a = simulate_earnings(E, h, np.arange(50, 55), seed=3).wages
    b = simulate_earnings(E, h, np.arange(50, 55), seed=3).wages
    assert np.array_equal(a, b)


def test_round_trip(tmp_path):
    p = EarningsProcess(rho=0.8, knots=(-1.0, 0.0, 1.0))
    p.save(tmp_path / "e.txt")
    assert EarningsProcess.load(tmp_path / "e.txt") == p
