"""Dated fixed-frequency series: the common currency of the toolkit.

Months are represented internally as an absolute month number
(``year * 12 + month - 1``) so that spans, offsets, and fold arithmetic
are plain integer arithmetic. Public entry points accept and emit
``YYYY-MM`` labels (``YYYY-Qn`` for quarterly series).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpanError, LengthError, ShapeError

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")
_QUARTER_RE = re.compile(r"^(\d{4})-Q([1-4])$")


def parse_month(label: str) -> int:
    """``"2007-01"`` -> absolute month number."""
    m = _MONTH_RE.match(label.strip())
    if not m:
        raise ValueError(f"bad month label {label!r}, expected YYYY-MM")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"bad month label {label!r}, month out of range")
    return year * 12 + month - 1


def format_month(month: int) -> str:
    """Absolute month number -> ``"YYYY-MM"``."""
    return f"{month // 12:04d}-{month % 12 + 1:02d}"


def format_quarter(month: int) -> str:
    """Absolute month number of a quarter's first month -> ``"YYYY-Qn"``."""
    return f"{month // 12:04d}-Q{month % 12 // 3 + 1}"


def parse_quarter(label: str) -> int:
    """``"2007-Q2"`` -> absolute month number of the quarter's first month."""
    m = _QUARTER_RE.match(label.strip())
    if not m:
        raise ValueError(f"bad quarter label {label!r}, expected YYYY-Qn")
    return int(m.group(1)) * 12 + (int(m.group(2)) - 1) * 3


def month_span(start: int, end: int) -> range:
    """Inclusive range of absolute months; raises on an empty span."""
    if end < start:
        raise InvalidSpanError(
            f"empty span {format_month(start)}..{format_month(end)}"
        )
    return range(start, end + 1)


def as_month(value: int | str) -> int:
    """Accept either an absolute month number or a ``YYYY-MM`` label."""
    if isinstance(value, str):
        return parse_month(value)
    return int(value)


@dataclass
class TimeSeries:
    """A dated, fixed-frequency sequence of real values.

    ``start`` is the absolute month of the first observation. For
    quarterly series (``freq="Q"``) ``start`` is the first month of the
    first quarter and consecutive values are 3 months apart.
    """

    start: int
    values: np.ndarray
    freq: str = "M"
    name: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ShapeError("TimeSeries values must be one-dimensional")
        if self.freq not in ("M", "Q"):
            raise ValueError(f"unsupported frequency {self.freq!r}")

    # -- span ---------------------------------------------------------------

    @property
    def step(self) -> int:
        return 1 if self.freq == "M" else 3

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> int:
        """Absolute month of the last observation (first month of the last
        quarter for quarterly series)."""
        if len(self.values) == 0:
            raise LengthError("empty series has no end")
        return self.start + (len(self.values) - 1) * self.step

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def labels(self) -> list[str]:
        fmt = format_month if self.freq == "M" else format_quarter
        return [fmt(self.start + i * self.step) for i in range(len(self.values))]

    # -- access --------------------------------------------------------------

    def window(self, start: int | str, end: int | str, purpose: str = "fit") -> np.ndarray:
        """Values for the inclusive month range ``start..end``.

        ``purpose`` tags the access as ``"fit"`` (values feed estimation)
        or ``"score"`` (values only enter loss computation); it changes
        nothing here but lets tracing doubles audit leakage.
        """
        if purpose not in ("fit", "score"):
            raise ValueError(f"unknown access purpose {purpose!r}")
        s, e = as_month(start), as_month(end)
        if self.freq != "M":
            raise ShapeError("window() addresses monthly series only")
        if s < self.start or e > self.end or e < s:
            raise InvalidSpanError(
                f"window {format_month(s)}..{format_month(e)} outside series "
                f"span {format_month(self.start)}..{format_month(self.end)}"
            )
        return self.values[s - self.start : e - self.start + 1]

    def slice(self, start: int | str, end: int | str) -> "TimeSeries":
        """Sub-series over the inclusive month range."""
        s, e = as_month(start), as_month(end)
        return TimeSeries(s, self.window(s, e), freq=self.freq, name=self.name)

    # -- csv -----------------------------------------------------------------

    def to_csv(self) -> str:
        lines = ["date,value"]
        for label, v in zip(self.labels(), self.values):
            lines.append(f"{label},{v:.12g}")
        return "\n".join(lines) + "\n"


def from_csv(text: str, name: str = "") -> TimeSeries:
    """Parse a ``date,value`` document into a monthly TimeSeries.

    Unlike the search-panel reader this puts no bounds on values, so it
    suits targets and macro indicators. Months must be consecutive.
    """
    from .errors import ParseError  # local import to avoid a cycle

    lines = [ln for ln in text.replace("﻿", "").splitlines() if ln.strip()]
    if not lines or [c.strip().lower() for c in lines[0].split(",")] != ["date", "value"]:
        raise ParseError("expected header 'date,value'")
    months, values = [], []
    for row_no, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != 2:
            raise ParseError("expected 2 fields", row=row_no)
        try:
            month = parse_month(cells[0])
            value = float(cells[1])
        except ValueError as exc:
            raise ParseError(str(exc), row=row_no) from None
        if months and month != months[-1] + 1:
            raise ParseError(
                f"months must be consecutive, {format_month(months[-1])} "
                f"then {cells[0].strip()}", row=row_no)
        months.append(month)
        values.append(value)
    if not months:
        raise ParseError("no observations")
    return TimeSeries(months[0], np.asarray(values), name=name)


def intersect_spans(*spans: tuple[int, int]) -> tuple[int, int]:
    """Common inclusive month range; raises if the intersection is empty."""
    start = max(s for s, _ in spans)
    end = min(e for _, e in spans)
    if end < start:
        raise InvalidSpanError("spans do not overlap")
    return start, end


def align_series(series: list[TimeSeries]) -> tuple[int, np.ndarray]:
    """Truncate monthly series to their common span.

    Returns the common start month and a ``T x len(series)`` matrix.
    """
    if not series:
        raise InvalidSpanError("no series to align")
    start, end = intersect_spans(*(s.span for s in series))
    cols = [s.window(start, end) for s in series]
    return start, np.column_stack(cols)
