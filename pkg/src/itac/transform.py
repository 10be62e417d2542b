"""Normalization and stationarity transforms for search-volume panels.

The raw 0..100 indices are re-scaled, logged, and differenced into the
stationary growth-style features the index constructions consume, then
aligned with the target series and standardized on the training window.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSeriesError,
    DomainError,
    EmptyColumnError,
    EmptyPanelError,
    InsufficientOverlapError,
    InvalidSpanError,
    LengthError,
)
from .ingest import TermPanel
from .series import TimeSeries, as_month, format_month, intersect_spans

MIN_OVERLAP_MONTHS = 24


def rescale_0_100(series: TimeSeries) -> TimeSeries:
    """Re-index so the series maximum is exactly 100.

    Idempotent: a series already peaking at 100 is returned unchanged in
    value. All values must be nonnegative.
    """
    values = series.values
    if len(values) == 0:
        raise LengthError("cannot rescale an empty series")
    negative = np.flatnonzero(values < 0)
    if negative.size:
        raise DomainError("negative value", index=int(negative[0]))
    peak = values.max()
    if peak <= 0:
        raise DegenerateSeriesError("all-zero series", name=series.name)
    return TimeSeries(series.start, values / peak * 100.0,
                      freq=series.freq, name=series.name)


def log_series(series: TimeSeries, offset: float = 1.0) -> TimeSeries:
    """Elementwise natural log of (value + offset).

    The default offset of 1 tolerates the exact zeros that occur in
    low-volume months.
    """
    shifted = series.values + offset
    bad = np.flatnonzero(shifted <= 0)
    if bad.size:
        raise DomainError(
            f"log of nonpositive value {shifted[bad[0]]:g}", index=int(bad[0]))
    return TimeSeries(series.start, np.log(shifted),
                      freq=series.freq, name=series.name)


def log_diff(series: TimeSeries) -> TimeSeries:
    """First difference of logs; the span starts one step later."""
    values = series.values
    if len(values) < 2:
        raise LengthError("log_diff needs at least 2 observations")
    bad = np.flatnonzero(values <= 0)
    if bad.size:
        raise DomainError(
            f"log of nonpositive value {values[bad[0]]:g}", index=int(bad[0]))
    return TimeSeries(series.start + series.step, np.diff(np.log(values)),
                      freq=series.freq, name=series.name)


# --- imputation ----------------------------------------------------------------

IMPUTE_POLICIES = ("linear", "forward-fill", "drop-term")


def impute(panel: TermPanel, policy: str = "linear",
           drop_threshold: float = 0.2) -> TermPanel:
    """Resolve the missing-mask of an assembled panel.

    ``linear`` interpolates interior gaps and extends edge values outward;
    ``forward-fill`` carries the last observation forward (leading gaps are
    back-filled from the first observation); ``drop-term`` removes any
    column with missing cells. Under the filling policies, columns missing
    more than ``drop_threshold`` of their months are dropped instead of
    filled. Non-missing cells are never altered.
    """
    if policy not in IMPUTE_POLICIES:
        raise ConfigError(f"unknown imputation policy {policy!r}")
    T, N = panel.values.shape
    for j in range(N):
        if panel.missing[:, j].all():
            raise EmptyColumnError(panel.terms[j])

    keep: list[int] = []
    for j in range(N):
        frac = panel.missing[:, j].mean()
        if policy == "drop-term":
            if frac == 0.0:
                keep.append(j)
        elif frac <= drop_threshold:
            keep.append(j)
    if not keep:
        raise EmptyPanelError("imputation dropped every column")

    values = panel.values[:, keep].copy()
    missing = panel.missing[:, keep]
    idx = np.arange(T, dtype=float)
    for c in range(len(keep)):
        miss = missing[:, c]
        if not miss.any():
            continue
        observed = ~miss
        if policy == "linear":
            values[miss, c] = np.interp(idx[miss], idx[observed],
                                        values[observed, c])
        else:  # forward-fill
            obs_idx = np.flatnonzero(observed)
            # map every row to the latest observation at or before it,
            # clipping leading rows to the first observation
            pos = np.searchsorted(obs_idx, np.arange(T), side="right") - 1
            fill = values[obs_idx[np.clip(pos, 0, None)], c]
            values[miss, c] = fill[miss]

    return TermPanel(
        terms=[panel.terms[j] for j in keep],
        categories=[panel.categories[j] for j in keep],
        start=panel.start,
        values=values,
        missing=np.zeros_like(missing),
    )


# --- alignment -------------------------------------------------------------------

@dataclass
class TransformSpec:
    """Per-column transform chain applied before alignment.

    Order is fixed: rescale to 0..100, log, log-difference. Each stage is
    optional. ``log_offset`` shifts values before either log so months
    with zero search volume survive the transform.
    """

    rescale: bool = True
    log: bool = False
    log_diff: bool = True
    log_offset: float = 1.0
    impute_policy: str = "linear"
    drop_threshold: float = 0.2
    standardize: bool = True

    def validate(self) -> None:
        if self.impute_policy not in IMPUTE_POLICIES:
            raise ConfigError(f"unknown imputation policy {self.impute_policy!r}")
        if self.log and self.log_diff:
            raise ConfigError("choose log levels or log differences, not both")
        if not self.log_offset >= 0:
            raise ConfigError("log_offset must be nonnegative")


@dataclass
class AlignedDataset:
    """Transformed features and target on a common monthly span.

    Every read that feeds estimation or scoring should go through
    ``window``; each call is recorded in ``access_log`` so that a
    completed run can be audited for look-ahead leakage.
    """

    start: int
    features: np.ndarray  # T x N
    target: np.ndarray  # length T
    feature_names: list[str]
    feature_categories: list[str]
    train_window: tuple[int, int]
    feature_means: np.ndarray
    feature_scales: np.ndarray
    target_name: str = ""
    access_log: list[tuple[int, int, str, str]] = field(default_factory=list)

    @property
    def end(self) -> int:
        return self.start + len(self.target) - 1

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def shape(self) -> tuple[int, int]:
        return self.features.shape

    def _rows(self, start: int | str, end: int | str) -> slice:
        s, e = as_month(start), as_month(end)
        if s < self.start or e > self.end or e < s:
            raise InvalidSpanError(
                f"window {format_month(s)}..{format_month(e)} outside dataset "
                f"span {format_month(self.start)}..{format_month(self.end)}")
        return slice(s - self.start, e - self.start + 1)

    def window(self, start: int | str, end: int | str,
               purpose: str = "fit") -> tuple[np.ndarray, np.ndarray]:
        """Feature rows and target values for an inclusive month range.

        ``purpose`` is ``"fit"`` when the values feed estimation and
        ``"score"`` when they only enter a loss; the access is logged
        either way.
        """
        if purpose not in ("fit", "score"):
            raise ValueError(f"unknown access purpose {purpose!r}")
        rows = self._rows(start, end)
        s, e = as_month(start), as_month(end)
        self.access_log.append((s, e, purpose, "features+target"))
        return self.features[rows], self.target[rows]

    def feature_window(self, start: int | str, end: int | str,
                       purpose: str = "fit") -> np.ndarray:
        """Feature rows only (used when predicting beyond scored months)."""
        if purpose not in ("fit", "score"):
            raise ValueError(f"unknown access purpose {purpose!r}")
        rows = self._rows(start, end)
        s, e = as_month(start), as_month(end)
        self.access_log.append((s, e, purpose, "features"))
        return self.features[rows]

    def labels(self) -> list[str]:
        return [format_month(self.start + i) for i in range(len(self.target))]

    def select(self, names: list[str]) -> "AlignedDataset":
        """Dataset restricted to the named feature columns (shared log)."""
        idx = [self.feature_names.index(n) for n in names]
        return AlignedDataset(
            start=self.start,
            features=self.features[:, idx],
            target=self.target,
            feature_names=[self.feature_names[i] for i in idx],
            feature_categories=[self.feature_categories[i] for i in idx],
            train_window=self.train_window,
            feature_means=self.feature_means[idx],
            feature_scales=self.feature_scales[idx],
            target_name=self.target_name,
            access_log=self.access_log,
        )


def transform_column(series: TimeSeries, spec: TransformSpec) -> TimeSeries:
    """Apply the configured chain to one column."""
    out = series
    if spec.rescale:
        out = rescale_0_100(out)
    if spec.log:
        out = log_series(out, spec.log_offset)
    if spec.log_diff:
        # exact zeros survive rescaling, so difference log(value + offset)
        shifted = TimeSeries(out.start, out.values + spec.log_offset,
                             freq=out.freq, name=out.name)
        out = log_diff(shifted)
    return out


def align(panel: TermPanel, target: TimeSeries,
          spec: TransformSpec | None = None,
          train_window: tuple[int | str, int | str] | None = None) -> AlignedDataset:
    """Impute, transform, and align a panel with its target.

    Both sides are truncated to the common span, which must cover at
    least 24 months. Features are standardized to zero mean and unit
    population variance using rows of the training window only; the
    window defaults to the full common span when not supplied.
    """
    spec = spec or TransformSpec()
    spec.validate()
    filled = impute(panel, spec.impute_policy, spec.drop_threshold)

    columns = []
    for j, term in enumerate(filled.terms):
        col = TimeSeries(filled.start, filled.values[:, j], name=term)
        columns.append(transform_column(col, spec))

    feat_start = columns[0].start
    feat_end = columns[0].end
    try:
        start, end = intersect_spans((feat_start, feat_end), target.span)
    except InvalidSpanError:
        raise InsufficientOverlapError(
            "panel and target spans do not overlap") from None
    if end - start + 1 < MIN_OVERLAP_MONTHS:
        raise InsufficientOverlapError(
            f"overlap of {end - start + 1} months is below the "
            f"{MIN_OVERLAP_MONTHS}-month minimum")

    features = np.column_stack([c.window(start, end) for c in columns])
    target_values = target.window(start, end).copy()

    if train_window is None:
        train = (start, end)
    else:
        train = (as_month(train_window[0]), as_month(train_window[1]))
        if train[0] < start or train[1] > end or train[1] < train[0]:
            raise InvalidSpanError(
                f"training window {format_month(train[0])}.."
                f"{format_month(train[1])} outside common span")

    rows = slice(train[0] - start, train[1] - start + 1)
    means = features[rows].mean(axis=0)
    scales = features[rows].std(axis=0)
    if spec.standardize:
        flat = np.flatnonzero(scales < 1e-12)
        if flat.size:
            raise DegenerateSeriesError(
                "constant on the training window",
                name=filled.terms[int(flat[0])])
        features = (features - means) / scales
    else:
        means = np.zeros_like(means)
        scales = np.ones_like(scales)

    return AlignedDataset(
        start=start,
        features=features,
        target=target_values,
        feature_names=list(filled.terms),
        feature_categories=list(filled.categories),
        train_window=train,
        feature_means=means,
        feature_scales=scales,
        target_name=target.name,
    )


def align_features_only(panel: TermPanel, spec: TransformSpec | None = None,
                        train_window: tuple[int | str, int | str] | None = None,
                        ) -> AlignedDataset:
    """Alignment without a target (index construction does not need one).

    The target slot is filled with NaN so any accidental use of it as a
    label poisons the result visibly.
    """
    spec = spec or TransformSpec()
    filled = impute(panel, spec.impute_policy, spec.drop_threshold)
    first = transform_column(
        TimeSeries(filled.start, filled.values[:, 0], name=filled.terms[0]), spec)
    dummy = TimeSeries(first.start, np.full(len(first), np.nan), name="")
    return align(panel, dummy, replace(spec), train_window)
