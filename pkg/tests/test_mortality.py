import numpy as np
import pandas as pd
import pytest

from healthdyn.errors import LoadError
from healthdyn.mortality import (GROUP_SHARES, MortalityTable, biennial_to_annual, default_lifetable,
                                 estimate_mortality, load_lifetable, rescale_to_lifetable, survival_curve)
from healthdyn.panel_data import SynthConfig, generate_panel

AGES = np.arange(50, 86)


def test_biennial_conversion():
    assert biennial_to_annual(0.19) == pytest.approx(0.1, abs=1e-12)
    assert biennial_to_annual(0.0) == 0.0


@pytest.mark.filterwarnings("ignore:.*empty mortality cells")
def test_no_deaths_gives_zero_rates(panel):
    d = panel.data.assign(dead_by_next_wave=False)
    raw = estimate_mortality(d, health=panel.truth.h_true.to_numpy())
    filled = raw.table[~raw.table.missing]
    assert (filled.p_annual == 0).all()


@pytest.mark.filterwarnings("ignore:.*empty mortality cells")
def test_doubled_hazard_recovered():
    p = generate_panel(SynthConfig(n_persons=50_000))
    raw = estimate_mortality(p.data.assign(h=p.truth.h_true.to_numpy()))
    agg = raw.table.groupby("group")[["n", "deaths"]].sum()
    pa = biennial_to_annual(agg.deaths / agg.n)
    assert 1.8 <= pa[0] / pa[3] <= 2.2


def test_rescaling_hits_life_table():
    r = np.random.default_rng(0)
    raw = r.uniform(0.001, 0.05, (AGES.size, 4))
    tab = rescale_to_lifetable(raw, default_lifetable(AGES), ages=AGES)
    np.testing.assert_allclose(tab.weighted_rate(), tab.lifetable, rtol=0, atol=1e-10)
    # ratios within an age are untouched
    np.testing.assert_allclose(tab.rates / tab.rates[:, [3]], raw / raw[:, [3]], rtol=1e-12)


def test_consistent_rates_need_no_scaling():
    lt = default_lifetable(AGES).annual_death_rate.to_numpy()
    rel = np.array([2.0, 1.4, 1.2, 1.0])
    raw = lt[:, None] * rel[None, :] / (rel @ GROUP_SHARES)
    tab = rescale_to_lifetable(raw, lt, ages=AGES)
    np.testing.assert_allclose(tab.factors, 1.0, atol=1e-12)


def test_clipping_is_reported():
    raw = np.full((3, 4), 0.01)
    raw[0, 0] = 1.0
    with pytest.warns(UserWarning, match="clipped"):
        tab = rescale_to_lifetable(raw, [0.5, 0.01, 0.01], ages=[50, 51, 52])
    assert tab.clipped[0, 0] and tab.rates.max() <= 1.0


def test_lifetable_must_cover_ages(tmp_path):
    with pytest.raises(LoadError, match="no entry"):
        rescale_to_lifetable(np.full((3, 4), 0.01), default_lifetable([50, 51]), ages=[50, 51, 52])
    bad = tmp_path / "lt.csv"
    pd.DataFrame({"x": [1], "y": [2]}).to_csv(bad, index=False)
    with pytest.raises(LoadError, match="expected columns"):
        load_lifetable(bad)


def _flat_table(rate=0.1):
    return MortalityTable(np.arange(50, 53), np.full((3, 4), rate), np.tile([-1.0, -0.5, 0.0], (3, 1)))


def test_survival_compounds():
    s = survival_curve(_flat_table(), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(s.to_numpy(), [0.9, 0.81, 0.729], rtol=1e-12)


def test_better_health_survives_longer():
    rates = np.tile([0.2, 0.1, 0.05, 0.02], (3, 1))
    tab = MortalityTable(np.arange(50, 53), rates, np.tile([-1.0, -0.5, 0.0], (3, 1)))
    bad = survival_curve(tab, [-2.0, -2.0, -0.7])
    good = survival_curve(tab, [1.0, 0.5, -0.7])
    assert (good.to_numpy() >= bad.to_numpy()).all()
    assert good.iloc[-1] > bad.iloc[-1]


def test_age_outside_table():
    with pytest.raises(KeyError, match="age 60"):
        _flat_table().death_prob(60, 0.0)


def test_table_round_trip(tmp_path):
    tab = rescale_to_lifetable(np.full((AGES.size, 4), 0.02), default_lifetable(AGES), ages=AGES,
                               cutoffs=[-1.0, -0.5, 0.0])
    back = MortalityTable.load(tab.save(tmp_path / "m.csv"))
    np.testing.assert_allclose(back.rates, tab.rates, rtol=1e-12)
    np.testing.assert_allclose(back.cutoffs, tab.cutoffs)
