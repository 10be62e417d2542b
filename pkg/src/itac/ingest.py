"""Acquire raw search-volume series and assemble them into aligned panels.

Series arrive either from local CSV files (``date,value`` with ``YYYY-MM``
dates) or from a configurable HTTP endpoint that serves the same format.
Values live on the 0..100 relative search-volume scale. Missing months are
kept explicit in the assembled panel; imputation is a transform concern.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import re
import tempfile
import time
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import requests

from .errors import (
    DuplicateError,
    EmptyPanelError,
    FetchError,
    InvalidSpanError,
    ParseError,
    RangeError,
    ThrottledError,
)
from .series import TimeSeries, as_month, format_month, month_span, parse_month

CATEGORIES = (
    "Food",
    "Tourism",
    "Services",
    "Home",
    "Personal care",
    "Transport",
    "Technology",
    "Recreation",
    "Education",
    "Finance",
)


@dataclass
class RawSeries:
    """A single term's monthly search-volume index.

    ``observations`` is a list of ``(absolute month, value)`` pairs, sorted
    and free of duplicates; values lie in [0, 100].
    """

    term: str
    category: str
    observations: list[tuple[int, float]]

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def span(self) -> tuple[int, int]:
        return (self.observations[0][0], self.observations[-1][0])

    def to_csv(self) -> str:
        lines = ["date,value"]
        for month, value in self.observations:
            lines.append(f"{format_month(month)},{value:.12g}")
        return "\n".join(lines) + "\n"

    def to_series(self) -> TimeSeries:
        """Contiguous TimeSeries; raises if months have gaps."""
        months = [m for m, _ in self.observations]
        if months != list(range(months[0], months[-1] + 1)):
            raise ParseError(f"series {self.term!r} has month gaps")
        return TimeSeries(months[0], np.array([v for _, v in self.observations]),
                          name=self.term)


def parse_raw_series(data: bytes | str, term: str = "", category: str = "") -> RawSeries:
    """Parse ``date,value`` CSV bytes into a validated RawSeries.

    Dates must be ISO ``YYYY-MM`` and strictly increasing; values must be
    real numbers in [0, 100]. Row numbers in errors are 1-based data rows.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from exc
    else:
        text = data.lstrip("﻿")

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input") from None
    if [h.strip().lower() for h in header] != ["date", "value"]:
        raise ParseError(f"expected header 'date,value', got {','.join(header)!r}")

    observations: list[tuple[int, float]] = []
    seen: set[int] = set()
    for row_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", row=row_no)
        date_text, value_text = row[0].strip(), row[1].strip()
        try:
            month = parse_month(date_text)
        except ValueError as exc:
            raise ParseError(str(exc), row=row_no) from exc
        try:
            value = float(value_text)
        except ValueError as exc:
            raise ParseError(f"bad value {value_text!r}", row=row_no) from exc
        if not np.isfinite(value) or value < 0.0 or value > 100.0:
            raise RangeError(f"value {value_text} outside [0, 100]", row=row_no)
        if month in seen:
            raise DuplicateError(format_month(month))
        if observations and month < observations[-1][0]:
            raise ParseError(
                f"months out of order at {date_text}", row=row_no)
        seen.add(month)
        observations.append((month, value))

    if not observations:
        raise ParseError("no observations")
    return RawSeries(term=term, category=category, observations=observations)


# --- panels -----------------------------------------------------------------

@dataclass
class TermPanel:
    """Aligned matrix of search-volume series.

    Rows are consecutive months starting at ``start``; columns follow the
    input term order. ``missing`` marks cells with no observation.
    """

    terms: list[str]
    categories: list[str]
    start: int
    values: np.ndarray  # T x N
    missing: np.ndarray  # T x N bool

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.start + self.values.shape[0] - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, term: str) -> np.ndarray:
        return self.values[:, self.terms.index(term)]

    def select(self, keep: list[str]) -> "TermPanel":
        """Sub-panel with the named columns, in the order given."""
        idx = [self.terms.index(t) for t in keep]
        return TermPanel(
            terms=[self.terms[i] for i in idx],
            categories=[self.categories[i] for i in idx],
            start=self.start,
            values=self.values[:, idx].copy(),
            missing=self.missing[:, idx].copy(),
        )

    def to_csv(self) -> str:
        lines = ["date," + ",".join(self.terms)]
        for t in range(self.values.shape[0]):
            cells = [format_month(self.start + t)]
            for j in range(self.values.shape[1]):
                cells.append("" if self.missing[t, j] else f"{self.values[t, j]:.12g}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def assemble_panel(series: list[RawSeries], span: tuple[int | str, int | str]) -> TermPanel:
    """Align raw series to a common monthly span.

    Months a series does not cover are flagged missing; stored values are
    never altered. Column order follows the input order.
    """
    if not series:
        raise EmptyPanelError("no series to assemble")
    start, end = as_month(span[0]), as_month(span[1])
    months = month_span(start, end)
    T, N = len(months), len(series)
    values = np.zeros((T, N))
    missing = np.ones((T, N), dtype=bool)
    for j, s in enumerate(series):
        for month, value in s.observations:
            if start <= month <= end:
                values[month - start, j] = value
                missing[month - start, j] = False
    return TermPanel(
        terms=[s.term for s in series],
        categories=[s.category for s in series],
        start=start,
        values=values,
        missing=missing,
    )


# --- vocabulary ---------------------------------------------------------------

@dataclass
class VocabularyEntry:
    term: str
    category: str
    in_consumption: bool
    in_commerce: bool


@dataclass
class Vocabulary:
    """The shipped term list with per-variant membership flags."""

    entries: list[VocabularyEntry]

    def terms(self, variant: str | None = None, category: str | None = None) -> list[str]:
        return [e.term for e in self.entries if _variant_match(e, variant)
                and (category is None or e.category == category)]

    def categories(self, variant: str | None = None) -> list[str]:
        seen: list[str] = []
        for e in self.entries:
            if _variant_match(e, variant) and e.category not in seen:
                seen.append(e.category)
        return seen

    def category_of(self, term: str) -> str:
        for e in self.entries:
            if e.term == term:
                return e.category
        raise KeyError(term)

    def digest(self) -> str:
        """Stable hash of the term list, recorded on built indicators."""
        blob = "\n".join(
            f"{e.term},{e.category},{int(e.in_consumption)},{int(e.in_commerce)}"
            for e in self.entries
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _variant_match(entry: VocabularyEntry, variant: str | None) -> bool:
    if variant is None:
        return True
    v = variant.lower()
    if v == "itacons":
        return entry.in_consumption
    if v == "itacome":
        return entry.in_commerce
    raise ValueError(f"unknown variant {variant!r}")


def load_vocabulary(path: str | Path | None = None) -> Vocabulary:
    """Load a vocabulary CSV (``term,category,itacons,itacome``).

    With no path, the bundled vocabulary ships with the package.
    """
    if path is None:
        text = resources.files("itac.data").joinpath("vocabulary.csv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip().lower() for h in header] != ["term", "category", "itacons", "itacome"]:
        raise ParseError("vocabulary header must be 'term,category,itacons,itacome'")
    entries = []
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError("expected 4 fields", row=row_no)
        term, category, cons, come = (c.strip() for c in row)
        if category not in CATEGORIES:
            raise ParseError(f"unknown category {category!r}", row=row_no)
        if cons not in ("0", "1") or come not in ("0", "1"):
            raise ParseError("flags must be 0 or 1", row=row_no)
        entries.append(VocabularyEntry(term, category, cons == "1", come == "1"))
    return Vocabulary(entries)


def slugify(term: str) -> str:
    """File-safe ASCII name for a term (used for fixtures and cache files)."""
    text = unicodedata.normalize("NFKD", term).encode("ascii", "ignore").decode()
    text = re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_").lower()
    return text or "term"


# --- fetching -----------------------------------------------------------------

@dataclass
class EndpointConfig:
    """Where and how to fetch series.

    ``base_url`` is read from the ``ITAC_TRENDS_URL`` environment variable
    when not set explicitly. Transient failures (connection errors, 5xx)
    are retried ``retries`` times with exponential backoff starting at
    ``backoff`` seconds. Responses are cached on disk keyed by
    (term, span, geo) when ``cache_dir`` is set.
    """

    base_url: str = ""
    geo: str = "PE"
    retries: int = 3
    backoff: float = 0.25
    timeout: float = 10.0
    cache_dir: str | Path | None = None

    def resolve_url(self) -> str:
        url = self.base_url or os.environ.get("ITAC_TRENDS_URL", "")
        if not url:
            raise FetchError(
                "no endpoint configured (set ITAC_TRENDS_URL or base_url)")
        return url.rstrip("/")


def _cache_path(cache_dir: str | Path, term: str, start: int, end: int, geo: str) -> Path:
    key = f"{term}|{format_month(start)}|{format_month(end)}|{geo}"
    digest = hashlib.sha256(key.encode("utf-8")).hexdigest()[:32]
    return Path(cache_dir) / f"{slugify(term)}-{digest}.csv"


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fetch_series(
    term: str,
    span: tuple[int | str, int | str],
    config: EndpointConfig,
    category: str = "",
) -> RawSeries:
    """Fetch one term's series over an inclusive month span.

    Deterministic against a deterministic endpoint: a cache hit replays the
    stored payload byte for byte. A 429 response raises ThrottledError
    without retrying; connection errors and 5xx responses are retried with
    exponential backoff before FetchError.
    """
    start, end = as_month(span[0]), as_month(span[1])
    if end < start:
        raise InvalidSpanError(
            f"empty span {format_month(start)}..{format_month(end)}")

    cache_file = None
    if config.cache_dir is not None:
        cache_file = _cache_path(config.cache_dir, term, start, end, config.geo)
        if cache_file.exists():
            return parse_raw_series(cache_file.read_bytes(), term=term, category=category)

    url = config.resolve_url() + "/trends"
    params = {
        "term": term,
        "start": format_month(start),
        "end": format_month(end),
        "geo": config.geo,
    }
    payload = _request_with_retries(url, params, config)
    series = parse_raw_series(payload, term=term, category=category)
    if cache_file is not None:
        _atomic_write(cache_file, payload)
    return series


def _request_with_retries(url: str, params: dict, config: EndpointConfig) -> bytes:
    last_error: Exception | None = None
    for attempt in range(config.retries + 1):
        if attempt > 0:
            time.sleep(config.backoff * (2 ** (attempt - 1)))
        try:
            response = requests.get(url, params=params, timeout=config.timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code == 200:
            return response.content
        if response.status_code == 429:
            raise ThrottledError(f"endpoint throttled request for {params['term']!r}")
        if 500 <= response.status_code < 600:
            last_error = FetchError(f"HTTP {response.status_code}")
            continue
        raise FetchError(f"HTTP {response.status_code} for {params['term']!r}")
    raise FetchError(
        f"fetch failed after {config.retries + 1} attempts: {last_error}")


def read_series_csv(path: str | Path, term: str = "", category: str = "") -> RawSeries:
    """Parse a local ``date,value`` CSV file."""
    path = Path(path)
    name = term or path.stem
    return parse_raw_series(path.read_bytes(), term=name, category=category)
