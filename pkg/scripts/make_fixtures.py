"""Regenerate the bundled fixtures.

The fixture world is a small synthetic economy with two latent monthly
drivers:

* a persistent demand factor every search term loads on, and
* a macro signal carried by the employment indicator.

Consumption growth mixes both plus white noise. The food terms read the
demand factor with very little idiosyncratic noise while every other
term is a much noisier reading, so the food-category indicator
genuinely adds predictive content beyond the conventional composite,
factor models that weight series by their noise level and smooth over
time beat a static principal component, and stepwise selection has one
clearly relevant stage-one candidate.

Run from the repository root:  python3 scripts/make_fixtures.py
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from itac.ingest import load_vocabulary, slugify
from itac.rng import derive
from itac.series import TimeSeries, format_month, parse_month

ROOT_SEED = 724
START = parse_month("2007-01")
END = parse_month("2024-12")
T = END - START + 1  # panel months
TD = T - 1  # differenced months, 2007-02 onward

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# terms that read the demand factor almost cleanly, with their loading
FOOD_LOADINGS = {"restaurants": 1.8, "Pizza Hut": 1.2}
IDIO_SCALE_DEFAULT = 4.5
IDIO_SCALE_FOOD = 0.5


def ar1(rng: np.random.Generator, phi: float, n: int) -> np.ndarray:
    innov = rng.normal(size=n)
    out = np.empty(n)
    out[0] = innov[0] / np.sqrt(1 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + innov[t]
    return out


def write_series(path: Path, start: int, values: np.ndarray,
                 fmt: str = "{:.6f}") -> None:
    lines = ["date,value"]
    for i, v in enumerate(values):
        lines.append(f"{format_month(start + i)},{fmt.format(v)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main() -> None:
    vocab = load_vocabulary()
    trends_dir = FIXTURES / "trends"
    trends_dir.mkdir(parents=True, exist_ok=True)

    demand = ar1(derive(ROOT_SEED, "demand"), 0.80, TD)
    macro = ar1(derive(ROOT_SEED, "macro"), 0.70, TD)

    # --- search-term panel -------------------------------------------------
    for term in vocab.terms():
        rng = derive(ROOT_SEED, "term", term)
        if term in FOOD_LOADINGS:
            lam, idio_scale = FOOD_LOADINGS[term], IDIO_SCALE_FOOD
        else:
            lam, idio_scale = rng.uniform(0.3, 1.1), IDIO_SCALE_DEFAULT
        d = lam * demand + idio_scale * ar1(rng, 0.15, TD)
        walk = np.concatenate([[0.0], np.cumsum(d)])
        # the downstream transform is a log difference, so the walk has to
        # live on the log scale: map it into a fixed band with an exponential
        # so d comes back out (up to rounding) with a constant gain. One
        # decimal of resolution keeps rounding noise well below the signal.
        lo, hi = (40.0, 99.0) if term in FOOD_LOADINGS else (15.0, 97.0)
        mid = (walk.max() + walk.min()) / 2.0
        gain = np.log(hi / lo) / (walk.max() - walk.min())
        level = np.round(np.sqrt(lo * hi) * np.exp(gain * (walk - mid)), 1)
        write_series(trends_dir / f"{slugify(term)}.csv", START, level,
                     fmt="{:.1f}")

    # --- targets -----------------------------------------------------------
    rng_y = derive(ROOT_SEED, "consumption")
    consumption = (0.85 * demand + 0.45 * macro
                   + 0.12 * rng_y.normal(size=TD))
    write_series(FIXTURES / "target_consumption.csv", START + 1, consumption)

    rng_c = derive(ROOT_SEED, "commerce")
    commerce = 0.75 * macro + 0.10 * demand + 0.12 * rng_c.normal(size=TD)
    write_series(FIXTURES / "target_commerce.csv", START + 1, commerce)

    # --- stage-one candidates ------------------------------------------------
    rng_e = derive(ROOT_SEED, "employment")
    employment = 0.90 * macro + 0.08 * rng_e.normal(size=TD)
    write_series(FIXTURES / "employment.csv", START + 1, employment)
    for name, phi in [("consumer_credit", 0.5), ("mortgage_credit", 0.5),
                      ("cpi", 0.8)]:
        write_series(FIXTURES / f"{name}.csv", START + 1,
                     ar1(derive(ROOT_SEED, name), phi, TD))

    # --- run config ----------------------------------------------------------
    (FIXTURES / "pipeline.toml").write_text(PIPELINE_TOML, encoding="utf-8")
    print(f"wrote fixtures under {FIXTURES}")


PIPELINE_TOML = '''\
version = 1

[data]
trends_dir = "trends"
target_consumption = "target_consumption.csv"
target_commerce = "target_commerce.csv"

[data.stage_one]
employment = "employment.csv"
consumer_credit = "consumer_credit.csv"
mortgage_credit = "mortgage_credit.csv"
cpi = "cpi.csv"

[span]
start = "2008-01"
end = "2024-10"
train_end = "2014-08"
validation_end = "2022-05"
folds = 5

[transform]
rescale = true
log_diff = true
impute_policy = "linear"
standardize = true

[build]
variant = "ITACons"
method = "pca"

[build.pca]
components = 6

[build.dfm]
factors = 4
max_iter = 100

[build.ann]
hidden_layers = 2
neurons = 16
epochs = 150
seed = 0

[build.rnn]
cell = "elman"
hidden_layers = 2
neurons = 8
sequence_window = 6
epochs = 80
seed = 0

[search]
family = "pca"

[[search.axes]]
name = "components"
lower = 2
upper = 12
scale = "integer"

[evaluate]
draws = 2000
burn_in = 500

[fetch]
geo = "PE"
cache_dir = "cache"

[output]
dir = "out"
'''


if __name__ == "__main__":
    main()
