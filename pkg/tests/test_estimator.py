import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqte.bootstrap import bootstrap_pairs
from bqte.data import TrialDataset
from bqte.errors import ConfigError, ValidityRangeError
from bqte.estimator import (
    EstimatorConfig,
    bqte_replicates,
    cutpoint_levels,
    estimate_bqte,
    evaluation_grid,
    paired_quantile_grid,
    piecewise_bqte,
    relative_curve,
    valid_range,
)
from bqte.serialize import serialize_curve

from conftest import brute_bqte, brute_knots


@pytest.mark.parametrize("K, expected", [
    (4, [0.2, 0.4, 0.6, 0.8]),
    (1, [0.5]),
    (9, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
])
def test_cutpoint_levels(K, expected):
    np.testing.assert_allclose(cutpoint_levels(K), expected, rtol=0, atol=1e-15)


def test_cutpoint_levels_zero():
    with pytest.raises(ConfigError):
        cutpoint_levels(0)


def test_paired_grid_identical_and_shift():
    c = np.arange(1, 11, dtype=float)
    xs, ys = paired_quantile_grid(c, c, 9)
    np.testing.assert_array_equal(xs, ys)
    xs, ys = paired_quantile_grid(c, c + 2, 9)
    np.testing.assert_allclose(ys, xs + 2, rtol=0, atol=1e-12)


def test_paired_grid_small_example():
    # levels 1/4, 1/2, 3/4 on n = 3: h = 1.5, 2, 2.5
    xs, ys = paired_quantile_grid([1, 3, 5], [2, 6, 10], 3)
    assert xs.tolist() == [2.0, 3.0, 4.0]
    assert ys.tolist() == [4.0, 6.0, 8.0]


@pytest.mark.parametrize("pairs, x, expected", [
    ([(1, 2), (3, 6), (5, 10)], 4, 4.0),
    ([(2, 5), (4, 5)], 3, 2.0),
    ([(1, 2), (3, 6), (5, 10)], 1, 1.0),
    ([(1, 2), (3, 6), (5, 10)], 5, 5.0),
])
def test_piecewise_examples(pairs, x, expected):
    assert piecewise_bqte(pairs, x) == expected


def test_piecewise_identical_groups_zero():
    xs, ys = paired_quantile_grid(np.arange(20.0), np.arange(20.0), 20)
    for x in np.linspace(xs[0], xs[-1], 17):
        assert piecewise_bqte((xs, ys), x) == 0.0


def test_piecewise_outside_support():
    with pytest.raises(ValidityRangeError, match="outside interpolation support"):
        piecewise_bqte([(1, 2), (3, 6)], 3.5)


def test_piecewise_collapses_tied_knots():
    pairs = [(1, 1), (2, 3), (2, 5), (3, 6)]
    assert piecewise_bqte(pairs, 2) == 2.0  # knot y = mean(3, 5)
    assert piecewise_bqte(pairs, 1.5) == 1.0
    assert piecewise_bqte(pairs, 2.5) == 2.5


def test_valid_range_levels():
    c = np.arange(1, 101, dtype=float)
    lo, hi = valid_range(c, 100)
    assert lo == pytest.approx(5.95, abs=1e-12)
    assert hi == pytest.approx(95.05, abs=1e-12)
    lo, hi = valid_range(c, 50)
    assert (lo, hi) == (np.quantile(c, 0.1), np.quantile(c, 0.9))


def test_valid_range_degenerate():
    with pytest.raises(ValidityRangeError, match="degenerate"):
        valid_range(np.arange(10.0), 10)


def test_bootstrap_pairs_contract():
    (c, t), = list(bootstrap_pairs([5.0], [1.0, 2.0], seed=3, count=1))
    assert c.tolist() == [5.0]
    c = np.arange(7.0)
    t = np.arange(4.0)
    a = list(bootstrap_pairs(c, t, seed=9, count=5))
    b = list(bootstrap_pairs(c, t, seed=9, count=5))
    for (c1, t1), (c2, t2) in zip(a, b):
        assert c1.size == 7 and t1.size == 4
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_array_equal(t1, t2)
    other = list(bootstrap_pairs(c, t, seed=10, count=5))
    assert any(not np.array_equal(x[0], y[0]) for x, y in zip(a, other))


def test_identical_groups(cold_like):
    ds = TrialDataset.from_arrays(cold_like.control.values, cold_like.control.values)
    for kind in ("bagging", "direct", "doksum"):
        curve = estimate_bqte(ds, EstimatorConfig(bootstrap_count=400, estimator_kind=kind))
        for p in curve.points:
            assert p.ci_low <= 0 <= p.ci_high
        if kind != "bagging":
            assert np.all(curve.estimate == 0)


def test_identity_bagging_within_bootstrap_se(rng):
    c = rng.lognormal(1.0, 0.5, 80)
    ds = TrialDataset.from_arrays(c, c)
    cfg = EstimatorConfig(bootstrap_count=1000)
    curve = estimate_bqte(ds, cfg, grid=None)
    reps = bqte_replicates(ds, cfg, curve.x)
    se = np.nanstd(reps, axis=0, ddof=1)
    assert np.all(np.abs(curve.estimate) < 3 * se + 1e-12)


def test_shift_direct_exact_at_cutpoints(rng):
    c = rng.lognormal(1.0, 0.6, 40)
    ds = TrialDataset.from_arrays(c, c + 1.75)
    K = 40
    xs, ys = paired_quantile_grid(c, c + 1.75, K)
    lo, hi = valid_range(c, K)
    grid = np.unique(xs[(xs >= lo) & (xs <= hi)])
    curve = estimate_bqte(ds, EstimatorConfig(bootstrap_count=200, estimator_kind="direct"), grid)
    np.testing.assert_allclose(curve.estimate, 1.75, rtol=0, atol=1e-12)
    cfg = EstimatorConfig(bootstrap_count=2000)
    bag = estimate_bqte(ds, cfg, grid)
    sd = np.nanstd(bqte_replicates(ds, cfg, grid), axis=0, ddof=1)
    assert np.all(np.abs(bag.estimate - 1.75) < 3 * sd)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=2, max_size=6),
       st.lists(st.integers(1, 12), min_size=2, max_size=6))
def test_direct_matches_brute_force_small_samples(control, treatment):
    K = len(control)
    xs, ys = paired_quantile_grid(control, treatment, K)
    knots = brute_knots(control, treatment, K)
    for x in sorted(set(xs.tolist())):
        got = piecewise_bqte((xs, ys), x)
        assert got == pytest.approx(brute_bqte(knots, x), abs=1e-12)
    for x in np.linspace(xs[0], xs[-1], 9):
        assert piecewise_bqte((xs, ys), x) == pytest.approx(brute_bqte(knots, x), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.5, 50), min_size=12, max_size=40, unique=True),
       st.lists(st.floats(0.5, 50), min_size=5, max_size=40))
def test_cutpoint_exactness(control, treatment):
    K = len(control)
    xs, ys = paired_quantile_grid(control, treatment, K)
    for i in range(K):
        assert piecewise_bqte((xs, ys), xs[i]) == ys[i] - xs[i]


def test_direct_scale_equivariance_bit_exact(rng):
    c = rng.lognormal(1.0, 0.6, 60)
    t = rng.lognormal(0.6, 0.6, 55)
    cfg = EstimatorConfig(bootstrap_count=50, estimator_kind="direct", grid_policy="uniform:9")
    base = estimate_bqte(TrialDataset.from_arrays(c, t), cfg)
    scaled = estimate_bqte(TrialDataset.from_arrays(4 * c, 4 * t), cfg)
    np.testing.assert_array_equal(scaled.x, 4 * base.x)
    np.testing.assert_array_equal(scaled.estimate, 4 * base.estimate)
    np.testing.assert_array_equal(relative_curve(scaled).estimate, relative_curve(base).estimate)


def test_direct_location_equivariance(rng):
    c = rng.normal(20, 4, 50)
    t = rng.normal(17, 5, 50)
    cfg = EstimatorConfig(bootstrap_count=20, estimator_kind="direct", grid_policy="uniform:11")
    a = estimate_bqte(TrialDataset.from_arrays(c, t), cfg)
    b = estimate_bqte(TrialDataset.from_arrays(c, t + 3.0), cfg)
    np.testing.assert_allclose(b.estimate - a.estimate, 3.0, rtol=0, atol=1e-12)


def test_bagging_within_bootstrap_range(cold_like):
    cfg = EstimatorConfig(bootstrap_count=300)
    curve = estimate_bqte(cold_like, cfg)
    reps = bqte_replicates(cold_like, cfg, curve.x)
    assert np.all(curve.estimate >= np.nanmin(reps, axis=0))
    assert np.all(curve.estimate <= np.nanmax(reps, axis=0))
    assert np.all(curve.ci_low <= curve.ci_high)
    assert np.all(np.diff(curve.x) > 0)
    lo, hi = curve.valid_range
    assert np.all((curve.x >= lo) & (curve.x <= hi))


def test_percentile_interval_from_replicates(cold_like):
    cfg = EstimatorConfig(bootstrap_count=400, alpha=0.1)
    curve = estimate_bqte(cold_like, cfg)
    reps = bqte_replicates(cold_like, cfg, curve.x)
    for g, p in enumerate(curve.points):
        col = reps[:, g][~np.isnan(reps[:, g])]
        assert p.ci_low == np.quantile(col, 0.05)
        assert p.ci_high == np.quantile(col, 0.95)


def test_doksum_plugin_value():
    c = np.arange(1.0, 21.0)
    t = 2 * c
    cfg = EstimatorConfig(bootstrap_count=50, estimator_kind="doksum", grid_policy="list:6,10,12.5")
    curve = estimate_bqte(TrialDataset.from_arrays(c, t), cfg)
    # F(12.5) = 0.6 -> 12th treatment value 24
    assert curve.estimate.tolist() == [6.0, 10.0, 11.5]


def test_grid_outside_valid_range_named(cold_like):
    lo, hi = valid_range(cold_like.control, 50)
    with pytest.raises(ValidityRangeError, match=f"{hi + 1:g}"):
        estimate_bqte(cold_like, EstimatorConfig(bootstrap_count=10), grid=[lo, hi + 1])


def test_observed_grid_policy(cold_like):
    grid = evaluation_grid(cold_like.control, 50, "observed")
    lo, hi = valid_range(cold_like.control, 50)
    expected = sorted({v for v in cold_like.control.values if lo <= v <= hi})
    assert grid.tolist() == expected


def test_small_bootstrap_warning(cold_like):
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        curve = estimate_bqte(cold_like, EstimatorConfig(bootstrap_count=100))
    assert curve.provenance["warnings"]


@pytest.mark.parametrize("kw", [
    dict(bootstrap_count=0), dict(bootstrap_count=1), dict(alpha=0.0), dict(alpha=1.0),
    dict(cutpoint_count=10), dict(estimator_kind="median"), dict(grid_policy="uniform:x"),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        EstimatorConfig(**kw)


def test_relative_curve():
    from bqte.estimator import CurvePoint, EffectCurve
    abs_curve = EffectCurve("bqte", "absolute", [CurvePoint(10.0, -4.0, -6.0, -2.0),
                                                 CurvePoint(5.0, 0.0, 0.0, 0.0)], 0.05, (5, 10))
    rel = relative_curve(abs_curve)
    assert rel.scale == "relative"
    assert rel.points[0] == CurvePoint(10.0, -0.4, -0.6, -0.2)
    assert rel.points[1] == CurvePoint(5.0, 0.0, 0.0, 0.0)
    bad = EffectCurve("bqte", "absolute", [CurvePoint(0.0, 1.0, 0.0, 2.0)], 0.05, (0, 1))
    with pytest.raises(ValidityRangeError, match="nonpositive"):
        relative_curve(bad)


def test_deterministic_across_workers(cold_like):
    cfg = EstimatorConfig(bootstrap_count=800)
    a = serialize_curve(estimate_bqte(cold_like, cfg, workers=1), "json")
    b = serialize_curve(estimate_bqte(cold_like, cfg, workers=3), "json")
    assert a == b
