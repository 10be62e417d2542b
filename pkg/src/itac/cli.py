"""Command-line entry points.

Every subcommand reads one TOML config file and honors ``--seed``, so
a run is reproducible from the config plus the seed alone. Exit codes:
0 success, 1 data or runtime error, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError, ItacError
from .evalx import grid_search, make_folds
from .ingest import (
    EndpointConfig,
    TermPanel,
    Vocabulary,
    assemble_panel,
    fetch_series,
    load_vocabulary,
    read_series_csv,
    slugify,
)
from .pipeline import (
    MODEL_FAMILIES,
    build_itac,
    canonical_variant,
    correlation_report,
    stage_one_fit,
    stage_two_forecast,
)
from .select import McmcConfig
from .series import TimeSeries
from .transform import align

PROG = "itac"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Search-trend consumption indicators: build, tune, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the run config TOML")
        p.add_argument("--seed", type=int, default=0, help="root seed")
        p.add_argument("--out", help="output directory (overrides config)")

    p = sub.add_parser("fetch", help="download term series into the local store")
    common(p)
    p.add_argument("--base-url", default="", help="endpoint root; defaults to ITAC_TRENDS_URL")
    p.add_argument("--geo", default="", help="geography code (overrides config)")

    p = sub.add_parser("build", help="build one indicator and write its CSV")
    common(p)
    p.add_argument("--method", choices=sorted(MODEL_FAMILIES), help="model family (overrides config)")
    p.add_argument("--variant", help="ITACons or ITACome (overrides config)")

    p = sub.add_parser("search", help="hyperparameter grid search over dated folds")
    common(p)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("evaluate", help="two-stage out-of-sample evaluation table")
    common(p)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", help="correlation matrix and fold summary")
    common(p)

    p = sub.add_parser("plot", help="render indicator-vs-target SVG charts")
    common(p)
    p.add_argument("--method", choices=sorted(MODEL_FAMILIES), help="model family (overrides config)")
    p.add_argument("--variant", help="ITACons or ITACome (overrides config)")
    return parser


# --- data loading helpers -------------------------------------------------------

def _vocab(cfg: RunConfig) -> Vocabulary:
    return load_vocabulary(cfg.vocabulary)


def _load_panel(cfg: RunConfig, vocab: Vocabulary) -> TermPanel:
    series = []
    for term in vocab.terms():
        path = cfg.trends_dir / f"{slugify(term)}.csv"
        if path.exists():
            series.append(read_series_csv(path, term=term,
                                          category=vocab.category_of(term)))
    if not series:
        raise ItacError(f"no term CSVs found under {cfg.trends_dir}")
    start = min(s.span[0] for s in series)
    end = max(s.span[1] for s in series)
    return assemble_panel(series, (start, end))


def _load_target(path: Path, name: str) -> TimeSeries:
    from .series import from_csv

    return from_csv(path.read_text(encoding="utf-8"), name=name)


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_window(cfg: RunConfig) -> tuple[int, int]:
    return (cfg.span.start, cfg.span.train_end)


def _folds(cfg: RunConfig):
    return make_folds((cfg.span.start, cfg.span.end), cfg.span.train_end,
                      cfg.span.validation_end, cfg.span.folds)


def _build_indicator(cfg: RunConfig, vocab, panel, method: str, variant: str,
                     seed: int, target: TimeSeries):
    return build_itac(panel, variant, method, cfg.model_config(method),
                      target=target, vocabulary=vocab, spec=cfg.transform,
                      train_window=_train_window(cfg), seed=seed)


# --- subcommands -------------------------------------------------------------------

def _cmd_fetch(args) -> int:
    cfg = load_config(args.config)
    vocab = _vocab(cfg)
    endpoint = EndpointConfig(base_url=args.base_url,
                              geo=args.geo or cfg.fetch_geo,
                              cache_dir=str(cfg.fetch_cache_dir))
    cfg.trends_dir.mkdir(parents=True, exist_ok=True)
    span = (cfg.span.start, cfg.span.end)
    for term in vocab.terms():
        raw = fetch_series(term, span, endpoint,
                           category=vocab.category_of(term))
        path = cfg.trends_dir / f"{slugify(term)}.csv"
        path.write_text(raw.to_csv(), encoding="utf-8")
        print(f"fetched {term} -> {path}")
    return 0


def _cmd_build(args) -> int:
    cfg = load_config(args.config)
    method = args.method or cfg.method
    variant = canonical_variant(args.variant or cfg.variant)
    vocab = _vocab(cfg)
    panel = _load_panel(cfg, vocab)
    target = _load_target(cfg.target_consumption, "consumption")
    indicator = _build_indicator(cfg, vocab, panel, method, variant,
                                 args.seed, target)
    out = _out_dir(cfg, args)
    path = out / f"itac_{method}.csv"
    path.write_text(indicator.to_csv(), encoding="utf-8")
    print(f"wrote {path} ({len(indicator)} months, variant {variant})")
    return 0


def _cmd_search(args) -> int:
    cfg = load_config(args.config)
    if cfg.search_grid is None:
        raise ConfigError("config has no [search] axes")
    vocab = _vocab(cfg)
    panel = _load_panel(cfg, vocab)
    target = _load_target(cfg.target_consumption, "consumption")
    variant = canonical_variant(cfg.variant)
    wanted = [t for t in vocab.terms(variant) if t in panel.terms]
    dataset = align(panel.select(wanted), target, cfg.transform,
                    _train_window(cfg))
    family = MODEL_FAMILIES[cfg.search_family]()
    result = grid_search(family, cfg.search_grid, _folds(cfg), dataset,
                         seed=args.seed, workers=args.workers)
    out = _out_dir(cfg, args)
    (out / "leaderboard.csv").write_text(result.to_csv(), encoding="utf-8")
    (out / "leaderboard.json").write_text(result.to_json(), encoding="utf-8")
    print(f"best {cfg.search_family} config: {result.best_config} "
          f"(cv mse {result.best_score:.6g})")
    print(f"wrote {out / 'leaderboard.csv'}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    vocab = _vocab(cfg)
    panel = _load_panel(cfg, vocab)
    target = _load_target(cfg.target_consumption, "consumption")
    variant = canonical_variant(cfg.variant)
    method = cfg.method
    folds = _folds(cfg)

    if not cfg.stage_one:
        raise ConfigError("config has no [data.stage_one] indicator files")
    commerce_path = cfg.target_commerce or cfg.target_consumption
    commerce = _load_target(commerce_path, "commerce_services")
    indicators = {name: _load_target(path, name)
                  for name, path in cfg.stage_one.items()}
    stage_one = stage_one_fit(indicators, commerce)

    itacs = {}
    for category in vocab.categories(variant):
        terms = [t for t in vocab.terms(variant, category) if t in panel.terms]
        if not terms:
            continue
        itacs[category] = build_itac(panel.select(terms), variant, method,
                                     cfg.model_config(method), target=target,
                                     vocabulary=vocab, spec=cfg.transform,
                                     train_window=_train_window(cfg),
                                     seed=args.seed)
    mcmc = McmcConfig(draws=cfg.evaluate_draws, burn_in=cfg.evaluate_burn_in)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = stage_two_forecast(stage_one.fitted, itacs, target, folds,
                                    mcmc=mcmc, seed=args.seed,
                                    workers=args.workers)
    out = _out_dir(cfg, args)
    (out / "table4.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "table4.json").write_text(report.to_json() + "\n", encoding="utf-8")
    sys.stdout.write(report.to_csv())
    for w in caught:
        print(f"note: {w.message}", file=sys.stderr)
    print(f"wrote {out / 'table4.csv'}")
    return 0


def _cmd_report(args) -> int:
    cfg = load_config(args.config)
    vocab = _vocab(cfg)
    panel = _load_panel(cfg, vocab)
    target = _load_target(cfg.target_consumption, "consumption")
    series = [target]
    for variant in ("ITACons", "ITACome"):
        indicator = _build_indicator(cfg, vocab, panel, cfg.method, variant,
                                     args.seed, target)
        series.append(indicator.to_series())
    corr = correlation_report(series)
    out = _out_dir(cfg, args)
    (out / "correlations.csv").write_text(corr.to_csv(), encoding="utf-8")
    (out / "folds.txt").write_text(_folds(cfg).describe() + "\n",
                                   encoding="utf-8")
    sys.stdout.write(corr.to_csv())
    print(f"wrote {out / 'correlations.csv'} and {out / 'folds.txt'}")
    return 0


def _cmd_plot(args) -> int:
    from .plotting import render_comparison

    cfg = load_config(args.config)
    method = args.method or cfg.method
    variant = canonical_variant(args.variant or cfg.variant)
    vocab = _vocab(cfg)
    panel = _load_panel(cfg, vocab)
    target = _load_target(cfg.target_consumption, "consumption")
    indicator = _build_indicator(cfg, vocab, panel, method, variant,
                                 args.seed, target)
    out = _out_dir(cfg, args)
    s = indicator.to_series()
    tgt = target.slice(s.start, min(target.end, s.end))
    path = out / f"plot_{variant.lower()}_{method}.svg"
    render_comparison(path, [s, tgt],
                      title=f"{variant} ({method}) vs {target.name or 'target'}")
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "fetch": _cmd_fetch,
    "build": _cmd_build,
    "search": _cmd_search,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "plot": _cmd_plot,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"{PROG}: config error: {exc}", file=sys.stderr)
        return 2
    except ItacError as exc:
        print(f"{PROG}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{PROG}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
