import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqte.data import (
    TrialDataset,
    impute_censored,
    load_csv,
    parse_csv,
    pool_trials,
    read_scenario_file,
    write_csv,
)
from bqte.errors import ConfigError, DataError
from bqte.quantiles import Sample


def test_load_three_rows(tmp_path):
    f = tmp_path / "trial.csv"
    f.write_text("group,duration\n0,5\n1,3\n0,7\n")
    ds = load_csv(f)
    assert ds.sizes == (2, 1)
    assert ds.trial_id == "trial"
    assert ds.control.values.tolist() == [5.0, 7.0]


def test_labels_and_censoring():
    ds = parse_csv("group,duration,censored\ncontrol,7,1\ntreatment,4,false\nControl,2,no\n")
    assert ds.control.values.tolist() == [7.0, 2.0]
    assert ds.control.censor_flags.tolist() == [True, False]
    assert ds.treatment.censor_flags.tolist() == [False]


def test_missing_column():
    with pytest.raises(DataError, match="'duration'"):
        parse_csv("group,days\n0,5\n1,4\n")


def test_negative_duration_names_line():
    with pytest.raises(DataError, match="line 3"):
        parse_csv("group,duration\n0,5\n1,-1\n")


@pytest.mark.parametrize("body, match", [
    ("group,duration\n2,5\n1,4\n", "unknown group"),
    ("group,duration\n0,abc\n1,4\n", "line 2"),
    ("group,duration,censored\n0,5,maybe\n1,4,0\n", "censored flag"),
    ("group,duration\n0,5\n", "both control and treatment"),
])
def test_rejections(body, match):
    with pytest.raises(DataError, match=match):
        parse_csv(body)


def test_zero_duration_strict():
    parse_csv("group,duration\n0,0\n1,4\n")
    with pytest.raises(DataError, match="nonpositive"):
        parse_csv("group,duration\n0,0\n1,4\n", strict_positive=True)


def _censored():
    return TrialDataset(
        Sample([3, 7, 7, 20], [False, True, True, True], label="control"),
        Sample([2, 9, 20], [False, True, True], label="treatment"),
        trial_id="t",
    )


def test_impute_at_censoring_time():
    ds = impute_censored(_censored())
    assert ds.control.values.tolist() == [3, 7, 7, 20]
    assert not ds.control.censor_flags.any() and not ds.treatment.censor_flags.any()
    assert len(ds.imputation_log) == 5
    assert ds.imputation_log[0].rule == "at-censoring-time"


def test_impute_fixed():
    ds = impute_censored(_censored(), 30.0)
    assert ds.control.values.tolist() == [3, 30, 30, 30]
    assert ds.treatment.values.tolist() == [2, 30, 30]
    assert {r.imputed for r in ds.imputation_log} == {30.0}
    assert impute_censored(_censored(), "fixed:30").control == ds.control


def test_impute_fixed_below_censoring_time():
    with pytest.raises(DataError):
        impute_censored(_censored(), 10.0)


def test_impute_no_censoring_and_idempotent():
    ds = TrialDataset.from_arrays([1, 2, 3], [4, 5])
    out = impute_censored(ds)
    assert out.control == ds.control and out.imputation_log == []
    once = impute_censored(_censored())
    twice = impute_censored(once)
    assert twice.control == once.control and twice.treatment == once.treatment
    assert twice.imputation_log == once.imputation_log


def test_bad_impute_rule():
    with pytest.raises(ConfigError):
        impute_censored(_censored(), "median")


def test_pool():
    a = TrialDataset.from_arrays(np.arange(10.0), np.arange(10.0), "a")
    b = TrialDataset.from_arrays(np.arange(20.0), np.arange(20.0) + 1, "b")
    assert pool_trials([a]) is a
    p = pool_trials([a, b])
    assert p.sizes == (30, 30)
    assert p.trial_id == "a+b"
    assert sorted(p.treatment.values) == sorted(np.concatenate([a.treatment.values, b.treatment.values]))
    with pytest.raises(DataError):
        pool_trials([])


def test_pool_associative_up_to_multiset():
    rng = np.random.default_rng(1)
    sets = [TrialDataset.from_arrays(rng.integers(1, 9, 5), rng.integers(1, 9, 4), str(i))
            for i in range(3)]
    left = pool_trials([pool_trials(sets[:2]), sets[2]])
    right = pool_trials([sets[0], pool_trials(sets[1:])])
    rev = pool_trials(sets[::-1])
    for d in (right, rev):
        assert sorted(d.control.values) == sorted(left.control.values)
        assert sorted(d.treatment.values) == sorted(left.treatment.values)


@settings(max_examples=40)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=20),
       st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=20),
       st.lists(st.booleans(), min_size=40, max_size=40))
def test_csv_round_trip(c, t, flags):
    ds = TrialDataset(Sample(c, flags[:len(c)], label="control"),
                      Sample(t, flags[20:20 + len(t)], label="treatment"), trial_id="x")
    back = parse_csv(write_csv(ds), trial_id="x")
    assert back.control == ds.control and back.treatment == ds.treatment


def test_scenario_file(tmp_path):
    f = tmp_path / "s.ini"
    f.write_text("[scenario]\nname = demo\ncontrol = normal(0, 1)  # comment\n"
                 "treatment = shift(2)\n[estimator]\nbootstrap = 100\n")
    d = read_scenario_file(f)
    assert d["scenario"]["control"] == "normal(0, 1)"
    assert d["estimator"]["bootstrap"] == "100"
    g = tmp_path / "bad.ini"
    g.write_text("[other]\na = 1\n")
    with pytest.raises(ConfigError):
        read_scenario_file(g)
