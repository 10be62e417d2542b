"""Run configuration: one TOML file drives a reproducible run.

The schema is versioned and strict: unknown keys anywhere in the file
are rejected with their full path, so typos fail loudly instead of
silently falling back to defaults. Relative paths are resolved against
the config file's own directory.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .evalx import GridAxis, GridSpec
from .series import parse_month
from .transform import IMPUTE_POLICIES, TransformSpec

CONFIG_VERSION = 1

_TRANSFORM_KEYS = {"rescale", "log", "log_diff", "log_offset",
                   "impute_policy", "drop_threshold", "standardize"}
_BUILD_MODEL_KEYS = {
    "pca": {"components"},
    "dfm": {"factors", "max_iter", "tol", "series_length"},
    "ann": {"hidden_layers", "neurons", "activation", "learning_rate",
            "epochs", "batch_size", "seed"},
    "rnn": {"cell", "hidden_layers", "neurons", "sequence_window",
            "learning_rate", "epochs", "batch_size", "seed"},
}
_AXIS_KEYS = {"name", "lower", "upper", "scale", "points"}


@dataclass
class SpanConfig:
    start: int
    end: int
    train_end: int
    validation_end: int
    folds: int = 5


@dataclass
class RunConfig:
    """Validated contents of one run's config file."""

    path: Path
    span: SpanConfig
    trends_dir: Path
    target_consumption: Path
    target_commerce: Path | None
    stage_one: dict[str, Path]
    vocabulary: Path | None
    transform: TransformSpec
    variant: str
    method: str
    model_configs: dict[str, dict]
    search_family: str
    search_grid: GridSpec | None
    evaluate_draws: int
    evaluate_burn_in: int
    fetch_geo: str
    fetch_cache_dir: Path
    output_dir: Path

    def model_config(self, method: str) -> dict:
        return dict(self.model_configs.get(method, {}))


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]!r}")


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key {where}.{key}")
    return table[key]


def _month(value, where: str) -> int:
    try:
        return parse_month(str(value))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a run config file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    base = path.parent

    _reject_unknown(doc, {"version", "data", "span", "transform", "build",
                          "search", "evaluate", "fetch", "output"}, "top level")
    version = _need(doc, "version", "top level")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}, "
                          f"expected {CONFIG_VERSION}")

    data = _need(doc, "data", "top level")
    _reject_unknown(data, {"trends_dir", "vocabulary", "target_consumption",
                           "target_commerce", "stage_one"}, "data")
    trends_dir = _resolve(base, _need(data, "trends_dir", "data"))
    target_consumption = _resolve(base, _need(data, "target_consumption", "data"))
    target_commerce = (_resolve(base, data["target_commerce"])
                       if "target_commerce" in data else None)
    vocabulary = _resolve(base, data["vocabulary"]) if "vocabulary" in data else None
    stage_one = {name: _resolve(base, p)
                 for name, p in data.get("stage_one", {}).items()}

    span_doc = _need(doc, "span", "top level")
    _reject_unknown(span_doc, {"start", "end", "train_end", "validation_end",
                               "folds"}, "span")
    span = SpanConfig(
        start=_month(_need(span_doc, "start", "span"), "span.start"),
        end=_month(_need(span_doc, "end", "span"), "span.end"),
        train_end=_month(_need(span_doc, "train_end", "span"), "span.train_end"),
        validation_end=_month(_need(span_doc, "validation_end", "span"),
                              "span.validation_end"),
        folds=int(span_doc.get("folds", 5)),
    )

    tr_doc = doc.get("transform", {})
    _reject_unknown(tr_doc, _TRANSFORM_KEYS, "transform")
    transform = TransformSpec(**tr_doc)
    transform.validate()
    if transform.impute_policy not in IMPUTE_POLICIES:
        raise ConfigError(f"unknown impute policy {transform.impute_policy!r}")

    build = doc.get("build", {})
    _reject_unknown(build, {"variant", "method", "pca", "dfm", "ann", "rnn"},
                    "build")
    variant = str(build.get("variant", "ITACons"))
    method = str(build.get("method", "pca"))
    if method not in _BUILD_MODEL_KEYS:
        raise ConfigError(f"build.method must be one of "
                          f"{sorted(_BUILD_MODEL_KEYS)}, got {method!r}")
    model_configs = {}
    for m, allowed in _BUILD_MODEL_KEYS.items():
        sub = build.get(m, {})
        _reject_unknown(sub, allowed, f"build.{m}")
        model_configs[m] = dict(sub)

    search = doc.get("search", {})
    _reject_unknown(search, {"family", "axes", "fixed"}, "search")
    search_family = str(search.get("family", "pca"))
    if search_family not in _BUILD_MODEL_KEYS:
        raise ConfigError(f"search.family must be one of "
                          f"{sorted(_BUILD_MODEL_KEYS)}, got {search_family!r}")
    grid = None
    if "axes" in search:
        axes = []
        for i, axis_doc in enumerate(search["axes"]):
            _reject_unknown(axis_doc, _AXIS_KEYS, f"search.axes[{i}]")
            axes.append(GridAxis(
                name=str(_need(axis_doc, "name", f"search.axes[{i}]")),
                lower=float(_need(axis_doc, "lower", f"search.axes[{i}]")),
                upper=float(_need(axis_doc, "upper", f"search.axes[{i}]")),
                scale=str(axis_doc.get("scale", "linear")),
                points=int(axis_doc.get("points", 8)),
            ))
        grid = GridSpec(axes, fixed=dict(search.get("fixed", {})))

    ev = doc.get("evaluate", {})
    _reject_unknown(ev, {"draws", "burn_in"}, "evaluate")
    draws = int(ev.get("draws", 2000))
    burn_in = int(ev.get("burn_in", 500))

    fetch = doc.get("fetch", {})
    _reject_unknown(fetch, {"geo", "cache_dir"}, "fetch")
    geo = str(fetch.get("geo", "PE"))
    cache_dir = _resolve(base, fetch.get("cache_dir", "cache"))

    output = doc.get("output", {})
    _reject_unknown(output, {"dir"}, "output")
    output_dir = _resolve(base, output.get("dir", "out"))

    return RunConfig(
        path=path, span=span, trends_dir=trends_dir,
        target_consumption=target_consumption,
        target_commerce=target_commerce, stage_one=stage_one,
        vocabulary=vocabulary, transform=transform, variant=variant,
        method=method, model_configs=model_configs,
        search_family=search_family, search_grid=grid,
        evaluate_draws=draws, evaluate_burn_in=burn_in, fetch_geo=geo,
        fetch_cache_dir=cache_dir, output_dir=output_dir,
    )
