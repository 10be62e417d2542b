"""Exception types shared across the toolkit.

Every error raised by the public API is a subclass of :class:`ItacError`,
so callers can catch toolkit failures without swallowing programming
errors. Warnings that are carried in model metadata (non-fatal) use
:class:`ConvergenceWarning`.
"""

from __future__ import annotations


class ItacError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ItacError):
    """Invalid configuration value, file, or unknown config key."""


# --- ingest ---------------------------------------------------------------

class ParseError(ItacError):
    """Malformed CSV content or payload. ``row`` is the 1-based data row."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class RangeError(ItacError):
    """Value outside the 0..100 search-index scale."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class DuplicateError(ItacError):
    """Duplicated month in a raw series."""

    def __init__(self, month: str):
        super().__init__(f"duplicate month {month}")
        self.month = month


class FetchError(ItacError):
    """Network failure that persisted through the retry policy."""


class ThrottledError(ItacError):
    """Endpoint signalled a quota or rate limit; back off and resume."""


class InvalidSpanError(ItacError):
    """Empty or inverted month range."""


class EmptyPanelError(ItacError):
    """Panel assembly received no series."""


# --- transform ------------------------------------------------------------

class DegenerateSeriesError(ItacError):
    """Series carries no usable variation (all zero, or zero variance)."""

    def __init__(self, message: str, name: str | None = None):
        super().__init__(message if name is None else f"{name}: {message}")
        self.name = name


class DomainError(ItacError):
    """Value outside the mathematical domain of a transform. ``index`` is
    the 0-based position of the offending value."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"index {index}: {message}")
        self.index = index


class LengthError(ItacError):
    """Series too short for the requested operation."""


class EmptyColumnError(ItacError):
    """Panel column with zero observations."""

    def __init__(self, term: str):
        super().__init__(f"column {term!r} has no observations")
        self.term = term


class InsufficientOverlapError(ItacError):
    """Feature and target spans overlap by fewer months than required."""


# --- models ---------------------------------------------------------------

class RankError(ItacError):
    """Component or factor count outside the admissible range."""


class NumericError(ItacError):
    """Non-finite input, singular covariance, or a failed decomposition."""


class ShapeError(ItacError):
    """Dimension mismatch between model and data."""


class SingularError(ItacError):
    """Rank-deficient regressor matrix. ``columns`` names the collinear set."""

    def __init__(self, columns: list[str]):
        super().__init__(f"collinear columns: {', '.join(columns)}")
        self.columns = columns


class DivergenceError(ItacError):
    """Training loss became non-finite. ``epoch`` is where it happened."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch


# --- evaluation -----------------------------------------------------------

class DegenerateTestError(ItacError):
    """Loss differential has zero variance; the test statistic is undefined."""


class PlanError(ItacError):
    """Fold boundaries out of order or outside the sample span."""


class SearchFailedError(ItacError):
    """Every grid point failed during hyperparameter search."""


class ConvergenceWarning(UserWarning):
    """Iterative estimation stopped before meeting its tolerance."""
