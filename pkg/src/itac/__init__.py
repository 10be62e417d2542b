"""Toolkit for building search-volume consumption indicators.

Builds monthly activity indices from panels of 0..100 search-volume
series (principal components, dynamic factors, feedforward and recurrent
networks), selects regressors, and evaluates forecasts against official
statistics.
"""

from .artifacts import from_document, load_model, save_model, to_document
from .errors import ConvergenceWarning, ItacError
from .evalx import (
    FoldPlan,
    GridAxis,
    GridSpec,
    LossSeries,
    SearchResult,
    TestResult,
    dm_test,
    grid_search,
    gw_test,
    make_folds,
    mse,
    rmse,
)
from .factors import (
    DfmModel,
    EmConfig,
    FactorSeries,
    PcaModel,
    dfm_fit,
    dfm_smooth,
    pca_fit,
    pca_transform,
)
from .ingest import (
    EndpointConfig,
    RawSeries,
    TermPanel,
    Vocabulary,
    assemble_panel,
    fetch_series,
    load_vocabulary,
    parse_raw_series,
    read_series_csv,
)
from .neural import (
    AnnConfig,
    AnnModel,
    RnnConfig,
    RnnModel,
    ann_predict,
    ann_train,
    gradient_check,
    make_sequences,
    rnn_predict,
    rnn_train,
)
from .pipeline import (
    EvalReport,
    IndicatorSeries,
    StageOneFit,
    build_itac,
    correlation_report,
    quarterly_aggregate,
    stage_one_fit,
    stage_two_forecast,
)
from .select import (
    InclusionRanking,
    McmcConfig,
    OlsModel,
    SelectionTrace,
    ols_fit,
    replay_trace,
    spike_slab_rank,
    stepwise_select,
)
from .series import TimeSeries, format_month, format_quarter, parse_month, parse_quarter
from .transform import AlignedDataset, TransformSpec, align, impute

__version__ = "0.1.0"

__all__ = [
    "AlignedDataset", "AnnConfig", "AnnModel", "ConvergenceWarning",
    "DfmModel", "EmConfig", "EndpointConfig", "EvalReport", "FactorSeries",
    "FoldPlan", "GridAxis", "GridSpec", "InclusionRanking",
    "IndicatorSeries", "ItacError", "LossSeries", "McmcConfig", "OlsModel",
    "PcaModel", "RawSeries", "RnnConfig", "RnnModel", "SearchResult",
    "SelectionTrace", "StageOneFit", "TermPanel", "TestResult", "TimeSeries",
    "TransformSpec", "Vocabulary", "align", "ann_predict", "ann_train",
    "assemble_panel", "build_itac", "correlation_report", "dfm_fit",
    "dfm_smooth", "dm_test", "fetch_series", "format_month",
    "format_quarter", "from_document", "gradient_check", "grid_search",
    "gw_test", "impute", "load_model", "load_vocabulary", "make_folds",
    "make_sequences", "mse", "ols_fit", "parse_month", "parse_quarter",
    "parse_raw_series", "pca_fit", "pca_transform", "quarterly_aggregate",
    "read_series_csv", "replay_trace", "rmse", "rnn_predict", "rnn_train",
    "save_model", "spike_slab_rank", "stage_one_fit", "stage_two_forecast",
    "stepwise_select", "to_document",
]
