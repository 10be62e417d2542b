"""Raw series parsing, fetching against the mock endpoint, panel assembly."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itac import assemble_panel, fetch_series, parse_raw_series, read_series_csv
from itac.errors import (
    DuplicateError,
    EmptyPanelError,
    FetchError,
    InvalidSpanError,
    ParseError,
    RangeError,
    ThrottledError,
)
from itac.ingest import EndpointConfig, RawSeries, Vocabulary, slugify
from itac.mock_server import MockTrendsServer
from itac.series import format_month, parse_month


def months(first, values):
    start = parse_month(first)
    return [(start + i, float(v)) for i, v in enumerate(values)]


# --- parse_raw_series ---------------------------------------------------


def test_parse_minimal_file():
    raw = parse_raw_series(b"date,value\n2007-01,50\n2007-02,100", term="t")
    assert len(raw.observations) == 2
    assert max(v for _, v in raw.observations) == 100.0


def test_parse_rejects_value_above_100():
    with pytest.raises(RangeError) as err:
        parse_raw_series(b"date,value\n2007-01,101", term="t")
    assert err.value.row == 1


def test_parse_rejects_negative_value():
    with pytest.raises(RangeError):
        parse_raw_series(b"date,value\n2007-01,-3", term="t")


def test_parse_rejects_malformed_date():
    with pytest.raises(ParseError) as err:
        parse_raw_series(b"date,value\n2007-13,5", term="t")
    assert err.value.row == 1


def test_parse_rejects_duplicate_month():
    with pytest.raises(DuplicateError) as err:
        parse_raw_series(b"date,value\n2007-01,5\n2007-01,6", term="t")
    assert "2007-01" in str(err.value)


def test_parse_rejects_out_of_order_months():
    with pytest.raises(ParseError):
        parse_raw_series(b"date,value\n2007-02,5\n2007-01,6", term="t")


def test_parse_rejects_missing_header():
    with pytest.raises(ParseError):
        parse_raw_series(b"2007-01,5\n", term="t")


def test_parse_rejects_empty_body():
    with pytest.raises(ParseError):
        parse_raw_series(b"date,value\n", term="t")


def test_parse_fixture_file(fixtures_dir):
    raw = read_series_csv(fixtures_dir / "trends" / "restaurants.csv",
                          term="restaurants")
    assert len(raw.observations) == 216
    first, last = raw.observations[0][0], raw.observations[-1][0]
    assert format_month(first) == "2007-01"
    assert format_month(last) == "2024-12"


def test_parse_serialize_round_trip(fixtures_dir):
    raw = read_series_csv(fixtures_dir / "trends" / "cusco.csv", term="cusco")
    again = parse_raw_series(raw.to_csv().encode("utf-8"), term="cusco")
    assert again.observations == raw.observations


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=40))
def test_parse_round_trip_property(raw_values):
    # quantize to the 0..100 index grid the ingest layer enforces
    vals = [v / 10.0 for v in raw_values]
    if max(vals) > 100.0:
        vals = [v * 100.0 / max(vals) for v in vals]
    series = RawSeries(term="x", category="Food",
                       observations=months("2010-01", vals))
    again = parse_raw_series(series.to_csv().encode("utf-8"), term="x")
    assert [v for _, v in again.observations] == pytest.approx(
        [v for _, v in series.observations], abs=1e-9)


# --- fetch_series against the bundled mock endpoint ----------------------


def test_fetch_term_from_mock_server(fixtures_dir, tmp_path):
    span = (parse_month("2007-01"), parse_month("2024-10"))
    with MockTrendsServer(fixtures_dir / "trends") as server:
        cfg = EndpointConfig(base_url=server.url, cache_dir=tmp_path / "cache")
        raw = fetch_series("restaurants", span, cfg)
    assert len(raw.observations) == 214


def test_fetch_empty_span(fixtures_dir, tmp_path):
    span = (parse_month("2008-06"), parse_month("2008-05"))
    with MockTrendsServer(fixtures_dir / "trends") as server:
        cfg = EndpointConfig(base_url=server.url, cache_dir=tmp_path / "cache")
        with pytest.raises(InvalidSpanError):
            fetch_series("restaurants", span, cfg)


def test_fetch_throttled(fixtures_dir, tmp_path):
    span = (parse_month("2007-01"), parse_month("2007-12"))
    with MockTrendsServer(fixtures_dir / "trends", throttle_after=0) as server:
        cfg = EndpointConfig(base_url=server.url, cache_dir=tmp_path / "cache")
        with pytest.raises(ThrottledError):
            fetch_series("restaurants", span, cfg)


def test_fetch_retries_transient_failures(fixtures_dir, tmp_path):
    span = (parse_month("2007-01"), parse_month("2007-12"))
    with MockTrendsServer(fixtures_dir / "trends", fail_first=2) as server:
        cfg = EndpointConfig(base_url=server.url, retries=3, backoff=0.01,
                             cache_dir=tmp_path / "cache")
        raw = fetch_series("restaurants", span, cfg)
        assert len(raw.observations) == 12
        assert server.request_count == 3


def test_fetch_gives_up_after_retries(fixtures_dir, tmp_path):
    span = (parse_month("2007-01"), parse_month("2007-12"))
    with MockTrendsServer(fixtures_dir / "trends", fail_first=99) as server:
        cfg = EndpointConfig(base_url=server.url, retries=2, backoff=0.01,
                             cache_dir=tmp_path / "cache")
        with pytest.raises(FetchError):
            fetch_series("restaurants", span, cfg)


def test_fetch_unknown_term(fixtures_dir, tmp_path):
    span = (parse_month("2007-01"), parse_month("2007-12"))
    with MockTrendsServer(fixtures_dir / "trends") as server:
        cfg = EndpointConfig(base_url=server.url, cache_dir=tmp_path / "cache")
        with pytest.raises(FetchError):
            fetch_series("no_such_term", span, cfg)


def test_fetch_cache_replays_identical_bytes(fixtures_dir, tmp_path):
    span = (parse_month("2007-01"), parse_month("2009-12"))
    with MockTrendsServer(fixtures_dir / "trends") as server:
        cfg = EndpointConfig(base_url=server.url, cache_dir=tmp_path / "cache")
        first = fetch_series("cusco", span, cfg)
        hits_after_first = server.request_count
        second = fetch_series("cusco", span, cfg)
        assert server.request_count == hits_after_first
    assert second.observations == first.observations


# --- assemble_panel -------------------------------------------------------


def test_assemble_identical_spans():
    a = RawSeries("a", "Food", months("2010-01", [1, 2, 3]))
    b = RawSeries("b", "Food", months("2010-01", [4, 5, 6]))
    panel = assemble_panel([a, b], (parse_month("2010-01"), parse_month("2010-03")))
    assert panel.shape == (3, 2)
    assert not panel.missing.any()
    assert panel.terms == ["a", "b"]


def test_assemble_marks_missing_month():
    obs = months("2020-01", [1, 2, 3, 4, 5])
    del obs[2]  # drop 2020-03
    a = RawSeries("a", "Food", obs)
    panel = assemble_panel([a], (parse_month("2020-01"), parse_month("2020-05")))
    assert panel.missing[2, 0]
    assert panel.missing.sum() == 1


def test_assemble_zero_series():
    with pytest.raises(EmptyPanelError):
        assemble_panel([], (parse_month("2010-01"), parse_month("2010-03")))


def test_assemble_consumption_terms(fixtures_dir, vocabulary):
    terms = vocabulary.terms("ITACons")
    assert len(terms) == 26
    series = [read_series_csv(fixtures_dir / "trends" / f"{slugify(t)}.csv",
                              term=t) for t in terms]
    span = (parse_month("2007-01"), parse_month("2024-10"))
    panel = assemble_panel(series, span)
    assert panel.shape == (214, 26)
    assert panel.terms == terms


def test_assemble_preserves_value_sums():
    a = RawSeries("a", "Food", months("2010-01", [1, 2, 3, 4]))
    b = RawSeries("b", "Home", months("2010-02", [10, 20]))
    span = (parse_month("2010-02"), parse_month("2010-04"))
    panel = assemble_panel([a, b], span)
    kept = panel.values[~panel.missing]
    expect = sum(v for m, v in a.observations if span[0] <= m <= span[1])
    expect += sum(v for m, v in b.observations if span[0] <= m <= span[1])
    assert kept.sum() == pytest.approx(expect)


def test_panel_csv_export_leaves_missing_cells_empty():
    obs = months("2010-01", [1, 2])
    del obs[1]
    a = RawSeries("a", "Food", obs)
    panel = assemble_panel([a], (parse_month("2010-01"), parse_month("2010-02")))
    lines = panel.to_csv().strip().splitlines()
    assert lines[0] == "date,a"
    assert lines[2] == "2010-02,"


# --- vocabulary ------------------------------------------------------------


def test_vocabulary_counts(vocabulary):
    assert len(vocabulary.terms()) == 32
    assert len(vocabulary.terms("ITACons")) == 26
    assert len(vocabulary.terms("ITACome")) == 23


def test_vocabulary_categories_fixed_set(vocabulary):
    allowed = {"Food", "Tourism", "Services", "Home", "Personal care",
               "Transport", "Technology", "Recreation", "Education", "Finance"}
    assert set(vocabulary.categories()) <= allowed


def test_vocabulary_digest_tracks_term_list(vocabulary):
    d = vocabulary.digest()
    assert len(d) == 64 and set(d) <= set("0123456789abcdef")
    trimmed = Vocabulary(entries=vocabulary.entries[:-1])
    assert trimmed.digest() != d


def test_category_of_unknown_term(vocabulary):
    with pytest.raises(KeyError):
        vocabulary.category_of("definitely-not-a-term")


def test_slugify():
    assert slugify("Pasajes Aéreos") == "pasajes_aereos"
    assert slugify("bus terminal") == "bus_terminal"


def test_fixture_values_within_index_bounds(trend_panel):
    kept = trend_panel.values[~trend_panel.missing]
    assert kept.min() >= 0.0
    assert kept.max() <= 100.0
    assert np.isfinite(kept).all()
