"""End-to-end index construction and the two-stage evaluation design.

``build_itac`` turns a term panel into a single dated indicator using
one of four model families. ``stage_one_fit`` condenses a handful of
conventional monthly indicators into a fitted composite; per category,
``stage_two_forecast`` asks whether adding the search-trend indicator
to that composite improves out-of-sample accuracy, testing the
improvement formally and summarizing everything in one report table.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSeriesError,
    DegenerateTestError,
    EmptyPanelError,
    ItacError,
    LengthError,
    PlanError,
)
from .evalx import FoldPlan, dm_test, gw_test, mse, rmse, squared_loss_series
from .factors import EmConfig, dfm_fit, dfm_smooth, pca_fit, pca_transform
from .ingest import TermPanel, Vocabulary, load_vocabulary
from .neural.mlp import AnnConfig, ann_predict, ann_train
from .neural.recurrent import RnnConfig, rnn_predict, rnn_train
from .rng import derive
from .select import McmcConfig, OlsModel, SelectionTrace, ols_fit, spike_slab_rank, stepwise_select
from .series import (
    TimeSeries,
    align_series,
    as_month,
    format_month,
    format_quarter,
    intersect_spans,
)
from .transform import AlignedDataset, TransformSpec, align

METHODS = ("pca", "dfm", "ann", "rnn")
VARIANTS = ("ITACons", "ITACome")

# Per-method hyperparameter defaults for index construction. The factor
# models default to their tuned orders; networks default to their
# config dataclasses.
DEFAULT_MODEL_CONFIG = {
    "pca": {"components": 6},
    "dfm": {"factors": 4, "max_iter": 100, "tol": 1e-6, "series_length": 0.0},
    "ann": {},
    "rnn": {},
}


def canonical_variant(variant: str) -> str:
    for v in VARIANTS:
        if variant.lower() == v.lower():
            return v
    raise ConfigError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


@dataclass
class IndicatorSeries:
    """A built search-trend indicator with its provenance snapshot."""

    values: np.ndarray
    start: int
    method: str
    variant: str
    hyperparameters: dict
    vocabulary_hash: str
    freq: str = "M"
    name: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).ravel()

    def __len__(self) -> int:
        return len(self.values)

    @property
    def step(self) -> int:
        return 1 if self.freq == "M" else 3

    @property
    def end(self) -> int:
        if len(self.values) == 0:
            raise LengthError("empty indicator has no end")
        return self.start + (len(self.values) - 1) * self.step

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def to_series(self) -> TimeSeries:
        return TimeSeries(self.start, self.values.copy(), freq=self.freq,
                          name=self.name or f"{self.variant}-{self.method}")

    def to_csv(self) -> str:
        fmt = format_month if self.freq == "M" else format_quarter
        lines = ["date,value"]
        for i, v in enumerate(self.values):
            lines.append(f"{fmt(self.start + i * self.step)},{v:.12g}")
        return "\n".join(lines) + "\n"


def _clamp_order(requested: int, limit: int, key: str, config: dict) -> int:
    # narrow categories cannot support the default factor count
    k = min(int(requested), int(limit))
    if k < 1:
        raise ConfigError(f"{key} must be at least 1")
    config[key] = k
    return k


def _rescale_to_target(raw: np.ndarray, rows: slice, y_train: np.ndarray) -> np.ndarray:
    """First factor -> index: match the target's training mean/variance.

    The factor's sign is arbitrary, so it is flipped when its training
    correlation with the target is negative before rescaling.
    """
    seg = raw[rows]
    m, s = float(seg.mean()), float(seg.std())
    if s < 1e-12:
        raise DegenerateSeriesError("index is constant on the training window")
    ym, ys = float(y_train.mean()), float(y_train.std())
    sign = 1.0
    yc = y_train - ym
    if float((seg - m) @ yc) < 0.0:
        sign = -1.0
    return (raw - m) / s * sign * ys + ym


def build_itac(panel: TermPanel, variant: str, method: str,
               config: dict | None = None, *, target: TimeSeries,
               vocabulary: Vocabulary | None = None,
               spec: TransformSpec | None = None,
               train_window: tuple[int | str, int | str] | None = None,
               seed: int = 0) -> IndicatorSeries:
    """Build one indicator from a term panel.

    The panel is filtered to the variant's vocabulary, pushed through
    the transform chain, and fed to the chosen model. Factor models
    emit their first factor rescaled to the training-window mean and
    variance of the target; networks emit their one-step fitted
    series. Deterministic given (panel, config, seed).
    """
    variant = canonical_variant(variant)
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}, expected one of {METHODS}")
    vocab = vocabulary if vocabulary is not None else load_vocabulary()

    wanted = [t for t in vocab.terms(variant) if t in panel.terms]
    if not wanted:
        raise EmptyPanelError(
            f"panel shares no terms with the {variant} vocabulary")
    ds = align(panel.select(wanted), target, spec, train_window)

    cfg = dict(DEFAULT_MODEL_CONFIG[method])
    cfg.update(config or {})
    tw = ds.train_window
    rows = slice(tw[0] - ds.start, tw[1] - ds.start + 1)
    x_train, y_train = ds.window(tw[0], tw[1], purpose="fit")
    T_train, n_terms = x_train.shape

    start = ds.start
    if method == "pca":
        k = _clamp_order(cfg["components"], min(T_train - 1, n_terms),
                         "components", cfg)
        model = pca_fit(x_train, k)
        raw = pca_transform(model, ds.features).values[:, 0]
        index = _rescale_to_target(raw, rows, y_train)
    elif method == "dfm":
        r = _clamp_order(cfg["factors"], min(n_terms, T_train // 10),
                         "factors", cfg)
        em = EmConfig(max_iter=int(cfg["max_iter"]), tol=float(cfg["tol"]),
                      series_length=float(cfg["series_length"]))
        model = dfm_fit(x_train, r, em)
        raw = dfm_smooth(model, ds.features).values[:, 0]
        index = _rescale_to_target(raw, rows, y_train)
    elif method == "ann":
        cfg.setdefault("seed", seed)
        ann_cfg = AnnConfig(**cfg)
        model = ann_train(ds, ann_cfg)
        feats = ds.feature_window(ds.start, ds.end, purpose="score")
        index = np.asarray(ann_predict(model, feats), dtype=float)
    else:
        cfg.setdefault("seed", seed)
        rnn_cfg = RnnConfig(**cfg)
        model = rnn_train(ds, rnn_cfg)
        w = rnn_cfg.sequence_window
        feats = ds.feature_window(ds.start, ds.end, purpose="score")
        if len(feats) <= w:
            raise LengthError(
                f"span of {len(feats)} months cannot seed a {w}-month window")
        seqs = np.stack([feats[t - w:t] for t in range(w, len(feats))])
        index = np.asarray(rnn_predict(model, seqs), dtype=float)
        start = ds.start + w

    snapshot = {"method": method, "variant": variant,
                "transform": {"rescale": (spec or TransformSpec()).rescale,
                              "log_diff": (spec or TransformSpec()).log_diff},
                "train_window": [format_month(tw[0]), format_month(tw[1])],
                "terms": len(wanted), **cfg}
    return IndicatorSeries(values=index, start=start, method=method,
                           variant=variant, hyperparameters=snapshot,
                           vocabulary_hash=vocab.digest(),
                           name=f"{variant}-{method}")


# --- stage one: the conventional-indicator composite --------------------------------

@dataclass
class StageOneFit:
    """Stepwise-refined OLS over the conventional indicators.

    ``fitted`` is the in-sample composite (X beta) over the aligned
    span; stage two uses it as the benchmark regressor.
    """

    model: OlsModel
    fitted: TimeSeries
    trace: SelectionTrace
    names: list[str]


def stage_one_fit(indicators: dict[str, TimeSeries], target: TimeSeries,
                  direction: str = "bidirectional",
                  criterion: str = "bic") -> StageOneFit:
    """Select among conventional indicators and record the composite."""
    if not indicators:
        raise ConfigError("no candidate indicators")
    names = list(indicators)
    start, matrix = align_series(list(indicators.values()) + [target])
    x, y = matrix[:, :-1], matrix[:, -1]
    # surfaces SingularError naming the collinear set before selection
    ols_fit(x, y, names)
    trace = stepwise_select(x, y, direction=direction, criterion=criterion,
                            names=names)
    model = trace.final
    idx = [names.index(n) for n in trace.selected]
    fitted = model.predict(x[:, idx])
    return StageOneFit(model=model, trace=trace,
                       fitted=TimeSeries(start, fitted, name="stage_one_xbeta"),
                       names=names)


# --- stage two: does the trend indicator add accuracy? --------------------------------

@dataclass
class EvalRow:
    category: str
    estimate: float
    mse: float
    rmse: float
    p_dm: float
    p_gw: float


@dataclass
class EvalReport:
    """One row per category plus a Total row; columns mirror the
    (category, estimate, mse, rmse, p_dm, p_gw) table shape."""

    rows: list[EvalRow]
    testing: tuple[int, int]
    warnings: list[str] = field(default_factory=list)
    inclusion: dict[str, float] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["category,estimate,mse,rmse,p_dm,p_gw"]
        for r in self.rows:
            cells = [r.category]
            for v in (r.estimate, r.mse, r.rmse, r.p_dm, r.p_gw):
                cells.append("" if np.isnan(v) else f"{v:.12g}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        import json

        def clean(v):
            return None if np.isnan(v) else v

        return json.dumps({
            "testing": [format_month(self.testing[0]),
                        format_month(self.testing[1])],
            "rows": [{"category": r.category, "estimate": clean(r.estimate),
                      "mse": clean(r.mse), "rmse": clean(r.rmse),
                      "p_dm": clean(r.p_dm), "p_gw": clean(r.p_gw)}
                     for r in self.rows],
            "inclusion": self.inclusion,
            "warnings": self.warnings,
        }, indent=2)

    def row(self, category: str) -> EvalRow:
        for r in self.rows:
            if r.category == category:
                return r
        raise KeyError(category)


def _as_monthly_series(obj) -> TimeSeries:
    s = obj.to_series() if isinstance(obj, IndicatorSeries) else obj
    if s.freq != "M":
        raise ConfigError("stage two expects monthly series")
    return s


def _tests_against_benchmark(y_test, pred, bench_pred, category, notes):
    loss_new = squared_loss_series(y_test, pred)
    loss_old = squared_loss_series(y_test, bench_pred)
    p_dm = p_gw = float("nan")
    try:
        p_dm = dm_test(loss_new, loss_old, horizon=1, correction="harvey",
                       alternative="less").p_value
    except (DegenerateTestError, LengthError) as exc:
        notes.append(f"{category}: equal-accuracy test skipped ({exc})")
    try:
        p_gw = gw_test(loss_new, loss_old, conditioning_window=1).p_value
    except (DegenerateTestError, LengthError) as exc:
        notes.append(f"{category}: conditional test skipped ({exc})")
    return p_dm, p_gw


def stage_two_forecast(xbeta: TimeSeries, itacs: dict, target: TimeSeries,
                       folds: FoldPlan, mcmc: McmcConfig | None = None,
                       seed: int = 0, workers: int = 1) -> EvalReport:
    """Per-category augmented regressions tested out of sample.

    For each category the target is regressed on the stage-one
    composite plus that category's indicator over the training and
    validation ranges, then forecast over the testing range; accuracy
    is compared against the composite-only benchmark with the
    equal-accuracy test (one-sided, augmented model more accurate) and
    the conditional predictive-ability test. The Total row keeps the
    categories whose posterior inclusion probability against the
    benchmark residual exceeds 0.5 and uses their equal-weight mean as
    one regressor. Degenerate tests become warnings, not failures.
    """
    if len(itacs) < 2:
        raise ConfigError(f"need at least 2 categories, got {len(itacs)}")
    fit_span = (folds.train_span[0], folds.validation[1])
    test_span = folds.testing

    series = {name: _as_monthly_series(s) for name, s in itacs.items()}
    for name, s in list(series.items()) + [("xbeta", xbeta), ("target", target)]:
        if s.start > fit_span[0] or s.end < test_span[1]:
            raise PlanError(
                f"{name}: span {format_month(s.start)}..{format_month(s.end)} "
                f"does not cover {format_month(fit_span[0])}.."
                f"{format_month(test_span[1])}")

    y_fit = target.window(fit_span[0], fit_span[1], purpose="fit")
    y_test = target.window(test_span[0], test_span[1], purpose="score")
    xb_fit = xbeta.window(fit_span[0], fit_span[1], purpose="fit")
    xb_test = xbeta.window(test_span[0], test_span[1], purpose="score")

    bench = ols_fit(xb_fit[:, None], y_fit, ["xbeta"])
    bench_pred = bench.predict(xb_test[:, None])

    notes: list[str] = []

    def evaluate(name: str) -> tuple[EvalRow, list[str]]:
        local: list[str] = []
        s = series[name]
        it_fit = s.window(fit_span[0], fit_span[1], purpose="fit")
        it_test = s.window(test_span[0], test_span[1], purpose="score")
        model = ols_fit(np.column_stack([xb_fit, it_fit]), y_fit,
                        ["xbeta", name])
        pred = model.predict(np.column_stack([xb_test, it_test]))
        p_dm, p_gw = _tests_against_benchmark(y_test, pred, bench_pred,
                                              name, local)
        return EvalRow(category=name, estimate=float(model.coefficients[2]),
                       mse=mse(y_test, pred), rmse=rmse(y_test, pred),
                       p_dm=p_dm, p_gw=p_gw), local

    ordered = sorted(series)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, ordered))
    else:
        results = [evaluate(name) for name in ordered]
    rows = [row for row, _ in results]
    for _, local in results:
        notes.extend(local)

    # Total row: Bayesian ranking of the categories against what the
    # benchmark leaves unexplained, then one composite regressor.
    resid_fit = y_fit - bench.predict(xb_fit[:, None])
    it_matrix = np.column_stack([series[n].window(fit_span[0], fit_span[1],
                                                  purpose="fit")
                                 for n in ordered])
    ranking = spike_slab_rank(it_matrix, resid_fit, config=mcmc, seed=seed,
                              names=ordered)
    inclusion = {n: float(p) for n, p in zip(ordered, ranking.probabilities)}
    kept = [n for n in ordered if inclusion[n] > 0.5]
    if kept:
        tot_fit = np.mean([series[n].window(fit_span[0], fit_span[1], "fit")
                           for n in kept], axis=0)
        tot_test = np.mean([series[n].window(test_span[0], test_span[1], "score")
                            for n in kept], axis=0)
        model = ols_fit(np.column_stack([xb_fit, tot_fit]), y_fit,
                        ["xbeta", "total"])
        pred = model.predict(np.column_stack([xb_test, tot_test]))
        estimate = float(model.coefficients[2])
    else:
        notes.append("Total: no category cleared inclusion 0.5; "
                     "benchmark forecasts reported")
        pred = bench_pred
        estimate = float("nan")
    p_dm, p_gw = _tests_against_benchmark(y_test, pred, bench_pred,
                                          "Total", notes)
    rows.append(EvalRow(category="Total", estimate=estimate,
                        mse=mse(y_test, pred), rmse=rmse(y_test, pred),
                        p_dm=p_dm, p_gw=p_gw))

    for note in notes:
        warnings.warn(note, UserWarning, stacklevel=2)
    return EvalReport(rows=rows, testing=test_span, warnings=notes,
                      inclusion=inclusion)


# --- aggregation and reporting ----------------------------------------------------

_QUARTER_START_MONTHS = (0, 3, 6, 9)  # Jan, Apr, Jul, Oct


def quarterly_aggregate(indicator):
    """Monthly -> quarterly by averaging calendar quarters.

    The series must start on a quarter boundary; a trailing partial
    quarter is dropped. Accepts an IndicatorSeries or a TimeSeries and
    returns the same type. Commutes with affine scaling.
    """
    start, values, freq = indicator.start, indicator.values, indicator.freq
    if freq != "M":
        raise ConfigError("input is not monthly")
    if start % 12 not in _QUARTER_START_MONTHS:
        raise ConfigError(
            f"series starts at {format_month(start)}, not a quarter boundary")
    n_q = len(values) // 3
    if n_q == 0:
        raise LengthError(f"{len(values)} months make no complete quarter")
    q_values = np.asarray(values[:n_q * 3], dtype=float).reshape(n_q, 3).mean(axis=1)
    if isinstance(indicator, IndicatorSeries):
        return IndicatorSeries(values=q_values, start=start,
                               method=indicator.method,
                               variant=indicator.variant,
                               hyperparameters=dict(indicator.hyperparameters),
                               vocabulary_hash=indicator.vocabulary_hash,
                               freq="Q", name=indicator.name)
    return TimeSeries(start, q_values, freq="Q", name=indicator.name)


@dataclass
class CorrelationReport:
    names: list[str]
    matrix: np.ndarray
    start: int
    end: int

    def to_csv(self) -> str:
        lines = ["," + ",".join(self.names)]
        for name, row in zip(self.names, self.matrix):
            lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
        return "\n".join(lines) + "\n"

    def value(self, a: str, b: str) -> float:
        return float(self.matrix[self.names.index(a), self.names.index(b)])


def correlation_report(series: list[TimeSeries]) -> CorrelationReport:
    """Pearson correlations over the common span, unit diagonal."""
    if len(series) < 2:
        raise ConfigError("need at least 2 series to correlate")
    names = [s.name or f"series{i + 1}" for i, s in enumerate(series)]
    start, matrix = align_series(series)
    stds = matrix.std(axis=0)
    for name, s in zip(names, stds):
        if s < 1e-12:
            raise DegenerateSeriesError("no variation on the common span",
                                        name=name)
    corr = np.corrcoef(matrix.T)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    return CorrelationReport(names=names, matrix=corr, start=start,
                             end=start + len(matrix) - 1)


# --- model families for hyperparameter search ---------------------------------------

def _gather_fit(dataset: AlignedDataset, windows: list[tuple[int, int]]):
    xs, ys = [], []
    for s, e in windows:
        f, t = dataset.window(s, e, purpose="fit")
        xs.append(f)
        ys.append(t)
    return np.vstack(xs), np.concatenate(ys)


def _score_regression(x_train, y_train, x_score):
    design = np.column_stack([np.ones(len(x_train)), x_train])
    coef, _, _, _ = np.linalg.lstsq(design, y_train, rcond=None)
    return np.column_stack([np.ones(len(x_score)), x_score]) @ coef


class PcaFamily:
    """Regress the target on the leading component scores."""

    name = "pca"

    def parameter_count(self, config: dict) -> int:
        return int(config["components"])

    def fit_predict(self, dataset, config, train_windows, score_window, seed):
        x_tr, y_tr = _gather_fit(dataset, train_windows)
        k = min(int(config["components"]), min(len(x_tr) - 1, x_tr.shape[1]))
        model = pca_fit(x_tr, k)
        s_tr = pca_transform(model, x_tr).values
        x_sc = dataset.feature_window(score_window[0], score_window[1],
                                      purpose="score")
        s_sc = pca_transform(model, x_sc).values
        return _score_regression(s_tr, y_tr, s_sc)


class DfmFamily:
    """Regress the target on smoothed factor estimates."""

    name = "dfm"

    def __init__(self, max_iter: int = 50, tol: float = 1e-5):
        self.max_iter = max_iter
        self.tol = tol

    def parameter_count(self, config: dict) -> int:
        return int(config["factors"])

    def fit_predict(self, dataset, config, train_windows, score_window, seed):
        x_tr, y_tr = _gather_fit(dataset, train_windows)
        r = min(int(config["factors"]), min(x_tr.shape[1], len(x_tr) // 10))
        em = EmConfig(max_iter=self.max_iter, tol=self.tol,
                      series_length=float(config.get("series_length", 0.0)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = dfm_fit(x_tr, r, em)
        f_tr = dfm_smooth(model, x_tr).values
        x_sc = dataset.feature_window(score_window[0], score_window[1],
                                      purpose="score")
        f_sc = dfm_smooth(model, x_sc).values
        return _score_regression(f_tr, y_tr, f_sc)


class AnnFamily:
    """Feedforward nets trained on the pooled training folds."""

    name = "ann"

    def __init__(self, epochs: int = 100, learning_rate: float = 1e-3,
                 batch_size: int = 32):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size

    def _config(self, config: dict, seed: int) -> AnnConfig:
        merged = {"epochs": self.epochs, "learning_rate": self.learning_rate,
                  "batch_size": self.batch_size, "seed": seed}
        merged.update(config)
        merged["hidden_layers"] = int(merged.get("hidden_layers", 2))
        merged["neurons"] = int(merged.get("neurons", 16))
        if "batch_size" in merged:
            merged["batch_size"] = int(merged["batch_size"])
        return AnnConfig(**merged)

    def parameter_count(self, config: dict) -> int:
        layers = int(config.get("hidden_layers", 2))
        neurons = int(config.get("neurons", 16))
        return (layers - 1) * neurons * neurons + 2 * neurons

    def fit_predict(self, dataset, config, train_windows, score_window, seed):
        x_tr, y_tr = _gather_fit(dataset, train_windows)
        model = ann_train((x_tr, y_tr), self._config(config, seed))
        x_sc = dataset.feature_window(score_window[0], score_window[1],
                                      purpose="score")
        return np.asarray(ann_predict(model, x_sc), dtype=float)


class RnnFamily:
    """Recurrent nets; sequences never cross fold boundaries."""

    name = "rnn"

    def __init__(self, cell: str = "elman", epochs: int = 100,
                 learning_rate: float = 1e-3, batch_size: int = 32):
        self.cell = cell
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size

    def _config(self, config: dict, seed: int) -> RnnConfig:
        merged = {"cell": self.cell, "epochs": self.epochs,
                  "learning_rate": self.learning_rate,
                  "batch_size": self.batch_size, "seed": seed}
        merged.update(config)
        merged["hidden_layers"] = int(merged.get("hidden_layers", 2))
        merged["neurons"] = int(merged.get("neurons", 8))
        merged["sequence_window"] = int(merged.get("sequence_window", 6))
        merged["batch_size"] = int(merged["batch_size"])
        return RnnConfig(**merged)

    def parameter_count(self, config: dict) -> int:
        layers = int(config.get("hidden_layers", 2))
        neurons = int(config.get("neurons", 8))
        return layers * (2 * neurons * neurons + neurons) + neurons + 1

    def fit_predict(self, dataset, config, train_windows, score_window, seed):
        cfg = self._config(config, seed)
        w = cfg.sequence_window
        seq_list, y_list = [], []
        for s, e in train_windows:
            f, t = dataset.window(s, e, purpose="fit")
            for i in range(w, len(t)):
                seq_list.append(f[i - w:i])
                y_list.append(t[i])
        if not seq_list:
            raise LengthError(
                f"no training window is longer than {w} months")
        model = rnn_train((np.stack(seq_list), np.asarray(y_list)), cfg)

        s, e = score_window
        look_start = max(dataset.start, s - w)
        feats = dataset.feature_window(look_start, e, purpose="score")
        preds = np.full(e - s + 1, np.nan)
        for month in range(s, e + 1):
            i = month - look_start
            if i >= w:
                preds[month - s] = float(rnn_predict(model, feats[i - w:i]))
        return preds


MODEL_FAMILIES = {
    "pca": PcaFamily,
    "dfm": DfmFamily,
    "ann": AnnFamily,
    "rnn": RnnFamily,
}
