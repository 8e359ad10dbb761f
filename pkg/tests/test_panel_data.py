import numpy as np
import pandas as pd
import pytest
from hypothesis import example, given, strategies as st

from healthdyn.errors import ConfigError, LoadError
from healthdyn.panel_data import (CORE_COLUMNS, INDICATORS, SynthConfig, generate_panel, load_panel,
                                  panel_summary, validate_panel)


def test_employment_50_59_matches_target(panel):
    summ = panel_summary(panel)
    assert list(summ.columns) == ["50-59", "60-69", "70-90"]
    assert abs(summ.loc["pct_working", "50-59"] - 79.5) <= 2.0


def test_summary_bands_follow_work_targets(panel):
    summ = panel_summary(panel)
    for band, target in zip(summ.columns, panel.config.work_targets):
        assert abs(summ.loc["pct_working", band] - 100 * target) <= 2.5


def test_zero_persons_is_a_config_error():
    with pytest.raises(ConfigError):
        generate_panel(SynthConfig(n_persons=0))


def test_two_waves_rejected():
    with pytest.raises(ConfigError):
        generate_panel(SynthConfig(n_persons=50, n_waves=2))


def test_negative_variance_rejected():
    with pytest.raises(ConfigError):
        generate_panel(SynthConfig(n_persons=50, wealth_noise_sd=-1.0))


def test_same_seed_gives_identical_files(tmp_path):
    cfg = SynthConfig(n_persons=400, seed=7)
    a = generate_panel(cfg).save(tmp_path / "a.csv", tmp_path / "at.csv")
    b = generate_panel(cfg).save(tmp_path / "b.csv", tmp_path / "bt.csv")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "at.csv").read_bytes() == (tmp_path / "bt.csv").read_bytes()


def test_other_seed_differs():
    a = generate_panel(SynthConfig(n_persons=200, seed=1)).data
    b = generate_panel(SynthConfig(n_persons=200, seed=2)).data
    assert not a.equals(b)


def test_round_trip(tmp_path):
    p = generate_panel(SynthConfig(n_persons=300, seed=3))
    p.save(tmp_path / "p.csv", tmp_path / "t.csv")
    q = load_panel(tmp_path / "p.csv", tmp_path / "t.csv")
    assert len(q) == len(p)
    pd.testing.assert_frame_equal(q.data, p.data, check_dtype=False)
    pd.testing.assert_frame_equal(q.truth, p.truth, check_dtype=False)


def test_wave_gap_is_accepted(tmp_path):
    p = generate_panel(SynthConfig(n_persons=200, seed=4))
    df = p.data
    # drop a middle wave of a person that survives
    counts = df.groupby("person_id").size()
    pid = counts[counts >= 3].index[0]
    rows = df.index[df.person_id == pid]
    gapped = df.drop(rows[1])
    path = tmp_path / "gap.csv"
    type(p)(gapped).save(path)
    assert len(load_panel(path)) == len(gapped)


def test_negative_hours_names_the_row(tmp_path):
    p = generate_panel(SynthConfig(n_persons=100, seed=5))
    df = p.data.copy()
    df.loc[7, "hours_annual"] = -10.0
    type(p)(df).save(tmp_path / "bad.csv")
    with pytest.raises(LoadError, match="row 9"):
        load_panel(tmp_path / "bad.csv")


def test_record_after_death_rejected(panel):
    df = panel.data
    pid = df.loc[df.dead_by_next_wave, "person_id"].iloc[0]
    row = df[(df.person_id == pid) & df.dead_by_next_wave].iloc[[0]].copy()
    row["wave"] += 1
    row["dead_by_next_wave"] = False
    bad = pd.concat([df[df.person_id == pid], row], ignore_index=True)
    with pytest.raises(LoadError, match="after death"):
        validate_panel(bad)


def test_missing_column_rejected(tmp_path):
    p = generate_panel(SynthConfig(n_persons=50, seed=6))
    p.data.drop(columns="age").to_csv(tmp_path / "x.csv", index=False)
    with pytest.raises(LoadError, match="missing columns"):
        load_panel(tmp_path / "x.csv")


def test_self_report_matches_latent_sign(panel):
    assert np.array_equal(panel.data.self_reported_good.to_numpy(), (panel.truth.h_star > 0).to_numpy())


def test_invariants(panel):
    df = panel.data
    assert (df.age >= 50).all()
    assert (df.hours_annual >= 0).all()
    assert df.groupby("person_id").wave.apply(lambda w: np.all(np.diff(w) > 0)).all()
    # wages missing (never zero) for non-workers
    assert df.loc[df.hours_annual == 0, "hourly_wage"].isna().all()
    assert (df.loc[df.hours_annual > 0, "hourly_wage"] > 0).all()
    assert set(CORE_COLUMNS) | set(INDICATORS) <= set(df.columns)


def test_single_non_worker_summary():
    row = pd.DataFrame({"age": [55], "hours_annual": [0.0], "hourly_wage": [np.nan], "wealth_total": [1.0]})
    s = panel_summary(row)
    assert s.loc["pct_working", "50-59"] == 0.0
    assert np.isnan(s.loc["hours_if_working", "50-59"])


def test_empty_summary_raises():
    with pytest.raises(ValueError):
        panel_summary(pd.DataFrame(columns=["age", "hours_annual", "hourly_wage", "wealth_total"]))


@given(st.integers(min_value=1, max_value=30), st.integers(min_value=3, max_value=5),
       st.integers(min_value=0, max_value=10_000))
@example(2, 3, 2923)  # extreme health saturated the work-intercept bracket
def test_generator_contract(n, waves, seed):
    p = generate_panel(SynthConfig(n_persons=n, n_waves=waves, seed=seed))
    validate_panel(p.data)
    assert p.data.person_id.nunique() == n
    assert (p.data.groupby("person_id").size() <= waves).all()
