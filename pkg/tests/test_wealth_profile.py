import numpy as np
import pandas as pd
import pytest

from healthdyn.errors import InsufficientDataError, LoadError
from healthdyn.panel_data import HOUSE_PRICES, SynthConfig, generate_panel
from healthdyn.wealth_profile import deflate_housing, fit_wealth_profile, simulate_profile

CFG = SynthConfig(wealth_noise_sd=2000.0)


@pytest.fixture(scope="module")
def quiet_panel():
    return generate_panel(CFG)


@pytest.fixture(scope="module")
def model(quiet_panel):
    d = deflate_housing(quiet_panel.data, pd.Series(HOUSE_PRICES))
    with pytest.warns(UserWarning, match="observed once"):
        return fit_wealth_profile(d)


def _records():
    return pd.DataFrame({"year": [2002, 2004, 2006], "wealth_total": [100.0, 200.0, 300.0],
                         "housing_wealth": [50.0, 140.0, 0.0]})


def test_flat_index_without_growth_changes_nothing():
    out = deflate_housing(_records(), {2002: 1.0, 2004: 1.0, 2006: 1.0}, real_return=0.0)
    pd.testing.assert_frame_equal(out, _records())


def test_price_rise_is_removed():
    out = deflate_housing(_records(), {2002: 1.0, 2004: 1.4, 2006: 1.4}, reference_year=2002, real_return=0.0)
    assert out.housing_wealth[1] == pytest.approx(100.0)
    assert out.wealth_total[1] == pytest.approx(160.0)


def test_no_housing_no_change():
    out = deflate_housing(_records(), {2002: 0.7, 2004: 1.0, 2006: 1.3})
    assert out.wealth_total[2] == 300.0


def test_price_index_gaps():
    with pytest.raises(LoadError, match="reference year"):
        deflate_housing(_records(), {2002: 1.0, 2006: 1.0})
    with pytest.raises(LoadError, match=r"\[2006\]"):
        deflate_housing(_records(), {2002: 1.0, 2004: 1.0})


def test_deflation_recovers_real_wealth(quiet_panel):
    d = deflate_housing(quiet_panel.data, pd.Series(HOUSE_PRICES))
    np.testing.assert_allclose(d.wealth_total, quiet_panel.truth.wealth_real, atol=1e-6)


def test_cubic_recovered(model):
    np.testing.assert_allclose(model.age_coef, CFG.wealth_poly, rtol=0.05)
    assert model.pi_u == pytest.approx(CFG.wealth_pi_u, rel=0.05)


def test_cohort_means_recovered(model):
    for c, v in model.cohort_means.items():
        assert v == pytest.approx(CFG.wealth_cohort_means[c], rel=0.05)


def test_constant_unemployment_leaves_coefficient_missing(quiet_panel):
    d = quiet_panel.data.assign(unemployment_rate=0.05)
    with pytest.warns(UserWarning):
        m = fit_wealth_profile(d)
    assert np.isnan(m.pi_u)


def test_own_cohort_identity(model):
    pd.testing.assert_series_equal(model.adjusted_effects(None), model.fixed_effects)
    ref = model.reference_cohort
    members = model.person_cohort[model.person_cohort == ref].index
    adj = model.adjusted_effects(ref)
    np.testing.assert_allclose(adj[members], model.fixed_effects[members], atol=1e-6)
    with pytest.raises(KeyError, match="1800"):
        model.adjusted_effects("1800-1809")


def test_profile_rises_over_retirement_ages(model):
    prof = simulate_profile(model)
    assert np.all(np.diff(prof.mean_wealth) > 0)


def test_level_shift_moves_only_effects(quiet_panel, model):
    d = deflate_housing(quiet_panel.data, pd.Series(HOUSE_PRICES))
    d = d.assign(wealth_total=d.wealth_total + 10_000.0)
    with pytest.warns(UserWarning):
        m2 = fit_wealth_profile(d)
    np.testing.assert_allclose(m2.age_coef, model.age_coef, rtol=1e-8)
    np.testing.assert_allclose(m2.cohort_means - model.cohort_means, 10_000.0, rtol=1e-8)


def test_residuals_net_out_person_effects(quiet_panel, model):
    pid = quiet_panel.data.loc[model.residuals.index, "person_id"]
    assert model.residuals.groupby(pid.to_numpy()).sum().abs().max() < 1e-6


def test_needs_repeat_observations():
    d = pd.DataFrame({"person_id": [1, 2], "age": [55, 60], "birth_year": [1950, 1945],
                      "unemployment_rate": [0.05, 0.05], "wealth_total": [1.0, 2.0]})
    with pytest.warns(UserWarning), pytest.raises(InsufficientDataError):
        fit_wealth_profile(d)
    with pytest.raises(ValueError):
        fit_wealth_profile(d, order=0)
