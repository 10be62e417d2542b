"""Forecast evaluation: losses, accuracy tests, folds, and grid search.

The two formal tests compare per-period forecast losses: the
unconditional equal-accuracy test with a long-run (Bartlett-weighted)
variance and optional small-sample correction, and the conditional
predictive-ability Wald test with lagged loss differentials as
instruments. The fold planner and grid harness implement the dated
cross-validation protocol used to pick hyperparameters.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Protocol

import numpy as np
from scipy import stats

from .errors import (
    ConfigError,
    DegenerateTestError,
    DivergenceError,
    LengthError,
    NumericError,
    PlanError,
    SearchFailedError,
    ShapeError,
)
from .rng import derive
from .series import as_month, format_month


# --- losses and point metrics ----------------------------------------------------

def mse(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Mean squared error."""
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if len(a) != len(p):
        raise ShapeError(f"length mismatch: {len(a)} vs {len(p)}")
    if len(a) == 0:
        raise ShapeError("empty inputs")
    d = a - p
    return float(np.mean(d * d))


def rmse(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Root mean squared error; rmse**2 equals mse by construction."""
    return float(np.sqrt(mse(actual, predicted)))


@dataclass
class LossSeries:
    """Per-period forecast losses (squared errors unless stated)."""

    losses: np.ndarray
    start: int = 0

    def __post_init__(self) -> None:
        self.losses = np.asarray(self.losses, dtype=float).ravel()

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.start + len(self.losses) - 1)


def squared_loss_series(actual: np.ndarray, predicted: np.ndarray,
                        start: int = 0) -> LossSeries:
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if len(a) != len(p):
        raise ShapeError(f"length mismatch: {len(a)} vs {len(p)}")
    return LossSeries((a - p) ** 2, start=start)


# --- accuracy tests ------------------------------------------------------------

@dataclass
class TestResult:
    """Outcome of a forecast-accuracy test."""

    statistic: float
    p_value: float
    n_obs: int
    correction: str = "none"  # none | harvey
    distribution: str = "normal"  # normal | t | chi2
    df: int = 0
    alternative: str = "two-sided"


def _loss_diff(loss_a, loss_b) -> np.ndarray:
    if isinstance(loss_a, LossSeries) and isinstance(loss_b, LossSeries):
        if loss_a.span != loss_b.span:
            raise ShapeError(
                f"loss spans differ: {loss_a.span} vs {loss_b.span}")
        return loss_a.losses - loss_b.losses
    a = np.asarray(loss_a.losses if isinstance(loss_a, LossSeries) else loss_a,
                   dtype=float).ravel()
    b = np.asarray(loss_b.losses if isinstance(loss_b, LossSeries) else loss_b,
                   dtype=float).ravel()
    if len(a) != len(b):
        raise ShapeError(f"loss lengths differ: {len(a)} vs {len(b)}")
    return a - b


def dm_test(loss_a, loss_b, horizon: int = 1, correction: str = "none",
            alternative: str = "two-sided") -> TestResult:
    """Equal-accuracy test on the loss differential d_t = loss_a - loss_b.

    The statistic is mean(d) / sqrt(lrv / T) where lrv is the Bartlett
    long-run variance with horizon-1 lags. ``correction="harvey"``
    applies the small-sample factor sqrt((T+1-2h+h(h-1)/T)/T) and reads
    the p-value from Student-t with T-1 degrees of freedom instead of
    the normal. ``alternative="less"`` favors model a (smaller losses).
    """
    if correction not in ("none", "harvey"):
        raise ConfigError(f"unknown correction {correction!r}")
    if alternative not in ("two-sided", "less", "greater"):
        raise ConfigError(f"unknown alternative {alternative!r}")
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    d = _loss_diff(loss_a, loss_b)
    T = len(d)
    if T < 10:
        raise LengthError(f"need at least 10 losses, got {T}")
    centered = d - d.mean()
    if np.abs(centered).max() == 0.0:
        raise DegenerateTestError("loss series are identical")

    gamma0 = float(centered @ centered) / T
    lrv = gamma0
    for k in range(1, horizon):
        cov = float(centered[k:] @ centered[:-k]) / T
        lrv += 2.0 * (1.0 - k / horizon) * cov
    if lrv <= 0:
        raise DegenerateTestError("long-run variance is not positive")

    statistic = float(d.mean() / np.sqrt(lrv / T))
    if correction == "harvey":
        h = horizon
        factor = np.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T)
        statistic *= float(factor)
        dist = stats.t(df=T - 1)
        distribution, df = "t", T - 1
    else:
        dist = stats.norm()
        distribution, df = "normal", 0

    if alternative == "two-sided":
        p = 2.0 * float(dist.sf(abs(statistic)))
    elif alternative == "greater":
        p = float(dist.sf(statistic))
    else:
        p = float(dist.cdf(statistic))
    return TestResult(statistic=statistic, p_value=min(p, 1.0), n_obs=T,
                      correction=correction, distribution=distribution,
                      df=df, alternative=alternative)


def gw_test(loss_a, loss_b, conditioning_window: int = 1) -> TestResult:
    """Conditional predictive-ability Wald test.

    Instruments are a constant plus the loss differential lagged 1 to
    ``conditioning_window`` periods; the statistic n zbar' Omega^-1 zbar
    is referred to chi-square with (window + 1) degrees of freedom.
    """
    if conditioning_window < 0:
        raise ConfigError("conditioning_window must be nonnegative")
    d = _loss_diff(loss_a, loss_b)
    q = conditioning_window
    n = len(d) - q
    if n < 20:
        raise LengthError(f"need at least 20 usable periods, got {n}")
    if np.abs(d - d.mean()).max() == 0.0:
        raise DegenerateTestError("loss series are identical")

    instruments = [np.ones(n)]
    for lag in range(1, q + 1):
        instruments.append(d[q - lag:len(d) - lag])
    h = np.column_stack(instruments)  # n x (q+1)
    z = h * d[q:, None]
    zbar = z.mean(axis=0)
    omega = z.T @ z / n
    try:
        solved = np.linalg.solve(omega, zbar)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular instrument covariance") from exc
    statistic = float(n * zbar @ solved)
    df = q + 1
    p = float(stats.chi2.sf(statistic, df))
    return TestResult(statistic=statistic, p_value=p, n_obs=n,
                      correction="none", distribution="chi2", df=df)


# --- fold planning -----------------------------------------------------------------

@dataclass
class FoldPlan:
    """Dated protocol: K contiguous training folds, then validation and test."""

    folds: list[tuple[int, int]]
    validation: tuple[int, int]
    testing: tuple[int, int]
    k: int

    @property
    def train_span(self) -> tuple[int, int]:
        return (self.folds[0][0], self.folds[-1][1])

    def train_windows_excluding(self, held_out: int) -> list[tuple[int, int]]:
        return [f for i, f in enumerate(self.folds) if i != held_out]

    def describe(self) -> str:
        lines = []
        for i, (s, e) in enumerate(self.folds, start=1):
            lines.append(f"fold {i}: {format_month(s)}..{format_month(e)}")
        lines.append(f"validation: {format_month(self.validation[0])}.."
                     f"{format_month(self.validation[1])}")
        lines.append(f"testing: {format_month(self.testing[0])}.."
                     f"{format_month(self.testing[1])}")
        return "\n".join(lines)


def make_folds(span: tuple[int | str, int | str], train_end: int | str,
               validation_end: int | str, k: int) -> FoldPlan:
    """Split a span into K contiguous training folds + validation + test.

    Training is ``span start .. train_end`` divided into K near-equal
    contiguous folds, with earlier folds absorbing any remainder months.
    """
    start, end = as_month(span[0]), as_month(span[1])
    t_end, v_end = as_month(train_end), as_month(validation_end)
    if k < 1:
        raise PlanError(f"fold count must be at least 1, got {k}")
    if not start <= t_end < v_end < end:
        raise PlanError(
            f"boundaries out of order: span {format_month(start)}.."
            f"{format_month(end)}, train_end {format_month(t_end)}, "
            f"validation_end {format_month(v_end)}")
    n_train = t_end - start + 1
    if n_train < k:
        raise PlanError(f"{n_train} training months cannot fill {k} folds")

    base, extra = divmod(n_train, k)
    folds = []
    cursor = start
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append((cursor, cursor + size - 1))
        cursor += size
    return FoldPlan(folds=folds, validation=(t_end + 1, v_end),
                    testing=(v_end + 1, end), k=k)


# --- hyperparameter grids ------------------------------------------------------------

_INTEGER_ENUMERATION_CAP = 33


@dataclass
class GridAxis:
    """One hyperparameter range.

    ``integer`` axes enumerate every value when the range is small (and
    evenly spaced integers otherwise); ``linear`` axes take ``points``
    evenly spaced reals; ``log2`` axes space the exponent evenly and
    round 2**exponent to the nearest integer, which is how fractional
    ranges like 2.5..6.5 become usable batch sizes.
    """

    name: str
    lower: float
    upper: float
    scale: str = "linear"
    points: int = 8

    def __post_init__(self) -> None:
        if self.scale not in ("linear", "log2", "integer"):
            raise ConfigError(f"unknown scale {self.scale!r}")
        if not self.lower < self.upper:
            raise ConfigError(
                f"axis {self.name!r}: lower {self.lower} must be below "
                f"upper {self.upper}")
        if self.points < 2:
            raise ConfigError(f"axis {self.name!r}: need at least 2 points")

    def values(self) -> list:
        if self.scale == "integer":
            lo, hi = int(np.ceil(self.lower)), int(np.floor(self.upper))
            count = hi - lo + 1
            if count <= max(_INTEGER_ENUMERATION_CAP, self.points):
                return list(range(lo, hi + 1))
            raw = np.linspace(lo, hi, self.points)
            return sorted({int(round(v)) for v in raw})
        if self.scale == "log2":
            exponents = np.linspace(self.lower, self.upper, self.points)
            seen = []
            for e in exponents:
                v = int(round(2.0**e))
                if v not in seen:
                    seen.append(v)
            return seen
        return [float(v) for v in np.linspace(self.lower, self.upper, self.points)]


@dataclass
class GridSpec:
    """Searched axes plus constants merged into every grid point."""

    axes: list[GridAxis]
    fixed: dict = field(default_factory=dict)

    def expand(self) -> list[dict]:
        """Cartesian product in axis order; duplicates collapse to first."""
        if not self.axes:
            raise ConfigError("empty grid")
        names = [a.name for a in self.axes]
        overlap = set(names) & set(self.fixed)
        if overlap:
            raise ConfigError(
                f"fixed key {sorted(overlap)[0]!r} is also a grid axis")
        combos = []
        seen = set()
        for values in product(*(a.values() for a in self.axes)):
            key = tuple(values)
            if key not in seen:
                seen.add(key)
                combos.append({**self.fixed, **dict(zip(names, values))})
        return combos


# --- grid search ----------------------------------------------------------------------

class ModelFamily(Protocol):
    """What grid_search needs from a model family.

    ``fit_predict`` trains on the given month windows and returns
    predictions for every month of ``score_window`` (NaN where the
    family cannot produce one, e.g. warm-up months); it must read the
    dataset only through its access-logged windows.
    """

    name: str

    def parameter_count(self, config: dict) -> int: ...

    def fit_predict(self, dataset, config: dict,
                    train_windows: list[tuple[int, int]],
                    score_window: tuple[int, int], seed: int) -> np.ndarray: ...


@dataclass
class LeaderboardRow:
    config: dict
    fold_scores: list[float]
    mean_score: float
    parameters: int
    failed: bool = False
    error: str = ""


@dataclass
class SearchResult:
    best_config: dict
    best_score: float
    leaderboard: list[LeaderboardRow]
    family: str
    seed: int

    def to_csv(self) -> str:
        keys = sorted({k for row in self.leaderboard for k in row.config})
        lines = [",".join(keys + ["mean_mse", "parameters", "status"])]
        for row in self.leaderboard:
            cells = [repr(row.config.get(k, "")) for k in keys]
            status = "failed" if row.failed else "ok"
            mean = "" if row.failed else f"{row.mean_score:.12g}"
            lines.append(",".join(cells + [mean, str(row.parameters), status]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "family": self.family,
            "seed": self.seed,
            "best_config": self.best_config,
            "best_score": self.best_score,
            "leaderboard": [
                {"config": r.config, "fold_scores": r.fold_scores,
                 "mean_mse": r.mean_score, "parameters": r.parameters,
                 "failed": r.failed, "error": r.error}
                for r in self.leaderboard
            ],
        }, indent=2)


def _point_seed(seed: int, family: str, config: dict) -> int:
    # stable per point regardless of evaluation order or worker count
    label = json.dumps(config, sort_keys=True, default=str)
    return int(derive(seed, "grid-point", family, label).integers(0, 2**31 - 1))


def grid_search(family: ModelFamily, grid: GridSpec, folds: FoldPlan,
                dataset, seed: int = 0, workers: int = 1) -> SearchResult:
    """K-fold search over the expanded grid.

    Each point trains on K-1 folds and scores MSE on the held-out fold,
    averaged over folds. The minimizer wins; ties go to the model with
    fewer parameters, then to grid order. A point whose training
    diverges is recorded as failed and skipped. Worker count changes
    only wall time, never the winner.
    """
    configs = grid.expand()
    if not configs:
        raise ConfigError("empty grid")

    def evaluate(index_config):
        index, config = index_config
        point_seed = _point_seed(seed, family.name, config)
        scores = []
        try:
            for held_out in range(folds.k):
                train_windows = folds.train_windows_excluding(held_out)
                score_window = folds.folds[held_out]
                pred = family.fit_predict(dataset, config, train_windows,
                                          score_window, point_seed)
                _, actual = dataset.window(score_window[0], score_window[1],
                                           purpose="score")
                pred = np.asarray(pred, dtype=float).ravel()
                if len(pred) != len(actual):
                    raise ShapeError(
                        f"family returned {len(pred)} predictions for a "
                        f"{len(actual)}-month fold")
                keep = ~np.isnan(pred)
                if not keep.any():
                    raise DivergenceError(0)
                scores.append(mse(actual[keep], pred[keep]))
        except (DivergenceError, NumericError) as exc:
            return LeaderboardRow(config=config, fold_scores=[],
                                  mean_score=float("inf"),
                                  parameters=family.parameter_count(config),
                                  failed=True, error=str(exc))
        return LeaderboardRow(config=config, fold_scores=scores,
                              mean_score=float(np.mean(scores)),
                              parameters=family.parameter_count(config))

    items = list(enumerate(configs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, items))
    else:
        rows = [evaluate(item) for item in items]

    viable = [(r.mean_score, r.parameters, i) for i, r in enumerate(rows)
              if not r.failed]
    if not viable:
        raise SearchFailedError("every grid point failed")
    _, _, winner = min(viable)
    return SearchResult(best_config=rows[winner].config,
                        best_score=rows[winner].mean_score,
                        leaderboard=rows, family=family.name, seed=seed)
