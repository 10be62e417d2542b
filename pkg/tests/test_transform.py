"""Rescaling, logs, log-differences, imputation, and panel alignment."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itac import align
from itac.errors import (
    ConfigError,
    DegenerateSeriesError,
    DomainError,
    EmptyColumnError,
    EmptyPanelError,
    InsufficientOverlapError,
    LengthError,
)
from itac.ingest import RawSeries, assemble_panel
from itac.series import TimeSeries, parse_month
from itac.transform import (
    TransformSpec,
    impute,
    log_diff,
    log_series,
    rescale_0_100,
)


def ts(values, first="2010-01", name="s"):
    return TimeSeries(parse_month(first), np.asarray(values, dtype=float),
                      name=name)


def panel_from(columns, first="2010-01"):
    """Build a TermPanel; None marks a missing month."""
    start = parse_month(first)
    series = []
    for name, vals in columns.items():
        obs = [(start + i, float(v)) for i, v in enumerate(vals) if v is not None]
        series.append(RawSeries(name, "Food", obs))
    length = max(len(v) for v in columns.values())
    return assemble_panel(series, (start, start + length - 1))


# --- rescale_0_100 ---------------------------------------------------------


def test_rescale_scales_peak_to_100():
    out = rescale_0_100(ts([2, 4, 8]))
    assert np.allclose(out.values, [25, 50, 100])


def test_rescale_identity_at_scale():
    out = rescale_0_100(ts([100, 100]))
    assert np.array_equal(out.values, [100, 100])


def test_rescale_all_zero():
    with pytest.raises(DegenerateSeriesError):
        rescale_0_100(ts([0, 0, 0]))


def test_rescale_negative_value():
    with pytest.raises(DomainError) as err:
        rescale_0_100(ts([5, -1, 3]))
    assert err.value.index == 1


def test_rescale_empty():
    with pytest.raises(LengthError):
        rescale_0_100(ts([]))


@given(st.lists(st.floats(0.0, 1e6), min_size=1).filter(lambda v: max(v) > 0))
def test_rescale_idempotent(values):
    once = rescale_0_100(ts(values))
    twice = rescale_0_100(once)
    assert np.allclose(twice.values, once.values, rtol=0, atol=1e-12)
    assert once.values.max() == pytest.approx(100.0)


# --- log_series ------------------------------------------------------------


def test_log_known_values():
    out = log_series(ts([1.0, np.e, np.e ** 2]), offset=0.0)
    assert np.allclose(out.values, [0.0, 1.0, 2.0])


def test_log_with_unit_offset():
    out = log_series(ts([0.0, 9.0]), offset=1.0)
    assert np.allclose(out.values, [0.0, np.log(10.0)])


def test_log_zero_without_offset():
    with pytest.raises(DomainError) as err:
        log_series(ts([0.0, 9.0]), offset=0.0)
    assert err.value.index == 0


# --- log_diff ---------------------------------------------------------------


def test_log_diff_constant_series():
    out = log_diff(ts([100, 100, 100]))
    assert np.array_equal(out.values, [0.0, 0.0])


def test_log_diff_known_growth():
    out = log_diff(ts([100, 110]))
    assert out.values == pytest.approx([np.log(1.1)])


def test_log_diff_shifts_span_one_month():
    out = log_diff(ts([1, 2, 3], first="2010-01"))
    assert out.start == parse_month("2010-02")
    assert len(out.values) == 2


def test_log_diff_length_one():
    with pytest.raises(LengthError):
        log_diff(ts([5.0]))


def test_log_diff_nonpositive():
    with pytest.raises(DomainError):
        log_diff(ts([5.0, 0.0]))


@given(st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=30))
def test_log_diff_inverts_exp_cumsum(diffs):
    d = np.asarray(diffs)
    levels = np.exp(np.concatenate([[0.0], d]).cumsum())
    out = log_diff(ts(levels))
    assert np.allclose(out.values, d, rtol=0, atol=1e-12)


# --- impute -----------------------------------------------------------------


def test_impute_linear_midpoint():
    filled = impute(panel_from({"a": [5, None, 7, 8, 9, 10]}), "linear")
    assert np.array_equal(filled.column("a"), [5, 6, 7, 8, 9, 10])
    assert not filled.missing.any()


def test_impute_forward_fill_backfills_leading():
    filled = impute(panel_from({"a": [None, 4, 5, 6, 7, 8]}), "forward-fill")
    assert np.array_equal(filled.column("a"), [4, 4, 5, 6, 7, 8])


def test_impute_forward_fill_carries_last():
    filled = impute(panel_from({"a": [3, 4, 5, 6, 7, None]}), "forward-fill")
    assert np.array_equal(filled.column("a"), [3, 4, 5, 6, 7, 7])


def test_impute_all_missing_column():
    panel = panel_from({"a": [1, 2, 3], "b": [None, None, None]})
    for policy in ("linear", "forward-fill", "drop-term"):
        with pytest.raises(EmptyColumnError):
            impute(panel, policy)


def test_impute_drop_term_removes_incomplete_columns():
    panel = panel_from({"a": [1, 2, 3, 4, 5, 6],
                        "b": [1, None, 3, 4, 5, 6]})
    filled = impute(panel, "drop-term")
    assert filled.terms == ["a"]


def test_impute_linear_drops_columns_over_threshold():
    panel = panel_from({"a": [1, 2, 3, 4, 5, 6],
                        "b": [1, None, None, 4, 5, 6]})
    filled = impute(panel, "linear", drop_threshold=0.2)
    assert filled.terms == ["a"]


def test_impute_dropping_everything():
    panel = panel_from({"a": [1, None, None, None, 5]})
    with pytest.raises(EmptyPanelError):
        impute(panel, "drop-term", drop_threshold=0.2)


def test_impute_unknown_policy():
    with pytest.raises(ConfigError):
        impute(panel_from({"a": [1, 2]}), "cubic")


@given(st.lists(st.floats(1.0, 99.0), min_size=5, max_size=30),
       st.integers(0, 100), st.sampled_from(["linear", "forward-fill"]))
def test_impute_never_alters_observed(values, gap_at, policy):
    cells = list(values)
    cells.insert(gap_at % (len(cells) + 1), None)
    panel = panel_from({"a": cells})
    filled = impute(panel, policy)
    col, mask = panel.column("a"), panel.missing[:, 0]
    assert np.array_equal(filled.column("a")[~mask], col[~mask])


# --- align -------------------------------------------------------------------


def identity_spec(**kw):
    base = dict(rescale=False, log=False, log_diff=False, standardize=True)
    base.update(kw)
    return TransformSpec(**base)


def rw_levels(rng, n):
    # positive random-walk levels so logs stay defined
    return np.exp(0.02 * rng.normal(size=n).cumsum()) * 50.0


def test_align_identity_equals_standardized_panel():
    rng = np.random.default_rng(0)
    vals = {f"t{j}": rng.uniform(1, 99, size=48) for j in range(3)}
    panel = panel_from(vals)
    target = ts(rng.normal(size=48))
    window = (parse_month("2010-01"), parse_month("2013-12"))
    ds = align(panel, target, identity_spec(), train_window=window)
    raw = np.column_stack([vals[f"t{j}"] for j in range(3)])
    manual = (raw - raw.mean(axis=0)) / raw.std(axis=0)
    assert np.allclose(ds.features, manual, atol=1e-10)
    assert np.array_equal(ds.target, target.values)


def test_align_span_is_the_overlap():
    rng = np.random.default_rng(1)
    start = parse_month("2007-01")
    panel = panel_from(
        {f"t{j}": rw_levels(rng, 214) for j in range(2)}, first="2007-01")
    target = ts(rng.normal(size=202), first="2008-01")
    window = (parse_month("2008-01"), parse_month("2014-08"))
    spec = TransformSpec(rescale=True, log_diff=True)
    ds = align(panel, target, spec, train_window=window)
    assert ds.start == parse_month("2008-01")
    assert len(ds.target) == 202
    assert ds.features.shape == (202, 2)


def test_align_rejects_short_overlap():
    rng = np.random.default_rng(2)
    panel = panel_from({"a": rw_levels(rng, 40)}, first="2010-01")
    target = ts(rng.normal(size=12), first="2012-05")
    window = (parse_month("2012-05"), parse_month("2013-04"))
    with pytest.raises(InsufficientOverlapError):
        align(panel, target, identity_spec(), train_window=window)


def test_align_disjoint_spans():
    rng = np.random.default_rng(3)
    panel = panel_from({"a": rw_levels(rng, 24)}, first="2010-01")
    target = ts(rng.normal(size=24), first="2015-01")
    with pytest.raises(InsufficientOverlapError):
        align(panel, target, identity_spec(),
              train_window=(parse_month("2015-01"), parse_month("2016-12")))


def test_align_training_window_standardization():
    rng = np.random.default_rng(4)
    panel = panel_from({f"t{j}": rw_levels(rng, 120) for j in range(4)})
    target = ts(rng.normal(size=120))
    # log differencing moves the panel start to 2010-02
    window = (parse_month("2010-02"), parse_month("2015-12"))
    spec = TransformSpec(rescale=True, log_diff=True)
    ds = align(panel, target, spec, train_window=window)
    rows = slice(0, window[1] - ds.start + 1)
    mu = ds.features[rows].mean(axis=0)
    var = ds.features[rows].var(axis=0)
    assert np.all(np.abs(mu) < 1e-10)
    assert np.allclose(var, 1.0, atol=1e-10)


def test_align_no_standardize_keeps_units():
    rng = np.random.default_rng(5)
    vals = {"a": rng.uniform(1, 99, size=30)}
    panel = panel_from(vals)
    target = ts(rng.normal(size=30))
    ds = align(panel, target, identity_spec(standardize=False),
               train_window=(parse_month("2010-01"), parse_month("2012-06")))
    assert np.array_equal(ds.features[:, 0], vals["a"])
    assert np.array_equal(ds.feature_means, [0.0])
    assert np.array_equal(ds.feature_scales, [1.0])


def test_spec_rejects_log_with_log_diff():
    with pytest.raises(ConfigError):
        TransformSpec(log=True, log_diff=True).validate()


def test_spec_rejects_unknown_impute_policy():
    with pytest.raises(ConfigError):
        TransformSpec(impute_policy="nearest").validate()


def test_dataset_window_records_access():
    rng = np.random.default_rng(6)
    panel = panel_from({"a": rng.uniform(1, 99, size=36)})
    target = ts(rng.normal(size=36))
    ds = align(panel, target, identity_spec(),
               train_window=(parse_month("2010-01"), parse_month("2012-12")))
    s, e = ds.start, ds.start + 11
    ds.window(s, e, purpose="fit")
    ds.feature_window(s, e, purpose="score")
    kinds = [(a[2], a[3]) for a in ds.access_log]
    assert ("fit", "features+target") in kinds
    assert ("score", "features") in kinds


def test_dataset_select_shares_access_log():
    rng = np.random.default_rng(7)
    panel = panel_from({"a": rng.uniform(1, 99, size=36),
                        "b": rng.uniform(1, 99, size=36)})
    target = ts(rng.normal(size=36))
    ds = align(panel, target, identity_spec(),
               train_window=(parse_month("2010-01"), parse_month("2012-12")))
    sub = ds.select(["b"])
    sub.window(ds.start, ds.start + 5, purpose="fit")
    assert len(ds.access_log) == 1
