"""Regressor selection: stepwise least squares and spike-and-slab ranking.

Stepwise search greedily adds or removes one regressor at a time while a
criterion improves. The Bayesian ranking runs a collapsed Gibbs sampler
over a point-mass spike and conjugate normal slab, reporting posterior
inclusion frequencies; it stands in for a full structural-time-series
selection, whose deliverable here is only the ranking itself.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import ConfigError, ConvergenceWarning, RankError, ShapeError, SingularError
from .rng import derive


# --- ordinary least squares -----------------------------------------------------

@dataclass
class OlsModel:
    """Least-squares fit with intercept-first coefficients."""

    coefficients: np.ndarray  # length p+1, intercept first
    residual_variance: float
    r_squared: float
    included_names: list[str]
    n_obs: int

    def predict(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != len(self.coefficients) - 1:
            raise ShapeError(
                f"expected {len(self.coefficients) - 1} regressors, "
                f"got {x.shape[1]}")
        return self.coefficients[0] + x @ self.coefficients[1:]


def _default_names(p: int) -> list[str]:
    return [f"x{j + 1}" for j in range(p)]


def ols_fit(features: np.ndarray, target: np.ndarray,
            names: list[str] | None = None) -> OlsModel:
    """OLS with intercept via QR; collinear inputs are reported by name.

    Rank deficiency names every column involved in the dependency, not
    just the one a pivoted factorization happens to drop.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(target, dtype=float).ravel()
    T, p = x.shape
    if len(y) != T:
        raise ShapeError("feature rows and target length differ")
    if T <= p + 1:
        raise RankError(f"need more than {p + 1} rows to fit {p} regressors")
    names = list(names) if names is not None else _default_names(p)

    design = np.column_stack([np.ones(T), x])
    _, r_mat, piv = linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    tol = diag.max() * max(design.shape) * np.finfo(float).eps
    rank = int(np.sum(diag > tol))
    if rank < p + 1:
        raise SingularError(_collinear_names(design, piv, rank, names))

    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ssr = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    return OlsModel(
        coefficients=coef,
        residual_variance=ssr / (T - p - 1),
        r_squared=1.0 - ssr / tss if tss > 0 else 0.0,
        included_names=names,
        n_obs=T,
    )


def _collinear_names(design: np.ndarray, piv: np.ndarray, rank: int,
                     names: list[str]) -> list[str]:
    """Columns participating in the rank deficiency, in input order.

    Each dropped pivot column is regressed on the independent ones; the
    columns with non-negligible weight are implicated alongside it.
    """
    labels = ["const"] + list(names)
    base = design[:, piv[:rank]]
    involved = set()
    for col in piv[rank:]:
        involved.add(int(col))
        weights, _, _, _ = np.linalg.lstsq(base, design[:, col], rcond=None)
        scale = np.abs(weights).max() if weights.size else 0.0
        for local, w in enumerate(weights):
            if abs(w) > 1e-8 * max(scale, 1.0):
                involved.add(int(piv[local]))
    return [labels[i] for i in sorted(involved) if i > 0]


# --- stepwise search --------------------------------------------------------------

DIRECTIONS = ("forward", "backward", "bidirectional")
CRITERIA = ("aic", "bic", "mse-cv")


@dataclass
class SelectionTrace:
    """Record of a stepwise run: every accepted move plus the final fit."""

    steps: list[tuple[str, str, float]]  # (action, variable, criterion value)
    final: OlsModel
    direction: str
    criterion: str
    names: list[str]
    start: str  # "empty" | "full"
    selected: list[str]

    def to_json(self) -> str:
        return json.dumps({
            "direction": self.direction,
            "criterion": self.criterion,
            "start": self.start,
            "steps": [list(s) for s in self.steps],
            "selected": self.selected,
            "coefficients": list(self.final.coefficients),
        }, indent=2)

    def to_csv(self) -> str:
        lines = ["step,action,variable,criterion"]
        for i, (action, var, value) in enumerate(self.steps, start=1):
            lines.append(f"{i},{action},{var},{value:.12g}")
        return "\n".join(lines) + "\n"


def _criterion_value(x: np.ndarray, y: np.ndarray, included: tuple[int, ...],
                     criterion: str, cv_folds: int,
                     gram: tuple | None = None) -> float:
    T = len(y)
    k = len(included) + 1
    if criterion == "mse-cv":
        design = np.column_stack([np.ones(T)] + [x[:, j] for j in included])
        # contiguous blocks keep the evaluation deterministic and honest
        # for serially dependent data
        bounds = np.linspace(0, T, cv_folds + 1).astype(int)
        total = 0.0
        for f in range(cv_folds):
            lo, hi = bounds[f], bounds[f + 1]
            mask = np.ones(T, dtype=bool)
            mask[lo:hi] = False
            coef, _, _, _ = np.linalg.lstsq(design[mask], y[mask], rcond=None)
            resid = y[lo:hi] - design[lo:hi] @ coef
            total += float(resid @ resid)
        return total / T
    # information criteria need only the SSR, computed from centered
    # Gram blocks so each evaluation costs O(k^3) independent of T
    gxx, gxy, yty = gram
    idx = list(included)
    if idx:
        try:
            beta = np.linalg.solve(gxx[np.ix_(idx, idx)], gxy[idx])
        except np.linalg.LinAlgError:
            return np.inf
        ssr = yty - float(gxy[idx] @ beta)
    else:
        ssr = yty
    ssr = max(ssr, 1e-300)
    if criterion == "aic":
        return T * np.log(ssr / T) + 2 * k
    return T * np.log(ssr / T) + k * np.log(T)  # bic


def stepwise_select(features: np.ndarray, target: np.ndarray,
                    direction: str = "bidirectional", criterion: str = "bic",
                    names: list[str] | None = None,
                    cv_folds: int = 5) -> SelectionTrace:
    """Greedy single-move search; ties go to the earliest column.

    ``forward`` starts from the intercept-only model and only adds;
    ``backward`` starts full and only removes; ``bidirectional`` starts
    empty and considers both moves each round.
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"unknown direction {direction!r}")
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown criterion {criterion!r}")
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(target, dtype=float).ravel()
    T, p = x.shape
    if p < 1:
        raise RankError("need at least one candidate regressor")
    if T <= 3:
        raise RankError("need more than 3 observations")
    names = list(names) if names is not None else _default_names(p)

    if criterion == "mse-cv":
        gram = None
    else:
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        gram = (xc.T @ xc, xc.T @ yc, float(yc @ yc))

    cache: dict[tuple[int, ...], float] = {}

    def score(included: tuple[int, ...]) -> float:
        if included not in cache:
            cache[included] = _criterion_value(x, y, included, criterion,
                                               cv_folds, gram)
        return cache[included]

    included: list[int] = list(range(p)) if direction == "backward" else []
    start = "full" if direction == "backward" else "empty"
    current = score(tuple(included))
    steps: list[tuple[str, str, float]] = []

    while True:
        best_move = None
        best_value = current
        if direction in ("forward", "bidirectional"):
            for j in range(p):
                if j in included:
                    continue
                value = score(tuple(sorted(included + [j])))
                if value < best_value:
                    best_move, best_value = ("add", j), value
        if direction in ("backward", "bidirectional"):
            for j in included:
                value = score(tuple(v for v in sorted(included) if v != j))
                if value < best_value:
                    best_move, best_value = ("remove", j), value
        if best_move is None:
            break
        action, j = best_move
        if action == "add":
            included.append(j)
        else:
            included.remove(j)
        included.sort()
        current = best_value
        steps.append((action, names[j], best_value))

    final = ols_fit(x[:, included], y, names=[names[j] for j in included])
    return SelectionTrace(steps=steps, final=final, direction=direction,
                          criterion=criterion, names=names, start=start,
                          selected=[names[j] for j in included])


def replay_trace(trace: SelectionTrace, features: np.ndarray,
                 target: np.ndarray) -> OlsModel:
    """Re-apply a trace's moves from its start set and refit.

    The replayed fit reproduces ``trace.final`` bit-exactly on the same
    inputs; this is the integrity check for stored traces.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    index = {name: j for j, name in enumerate(trace.names)}
    included = set(range(x.shape[1])) if trace.start == "full" else set()
    for action, var, _ in trace.steps:
        j = index[var]
        if action == "add":
            if j in included:
                raise ConfigError(f"trace adds {var!r} twice")
            included.add(j)
        elif action == "remove":
            included.discard(j)
        else:
            raise ConfigError(f"unknown trace action {action!r}")
    cols = sorted(included)
    return ols_fit(x[:, cols], np.asarray(target, dtype=float).ravel(),
                   names=[trace.names[j] for j in cols])


# --- spike-and-slab ranking ---------------------------------------------------------

@dataclass
class McmcConfig:
    """Gibbs sampler controls for the spike-and-slab regression."""

    draws: int = 2000
    burn_in: int = 500
    prior_inclusion: float = 0.5
    slab_scale: float = 100.0  # prior variance multiple v: beta ~ N(0, v sigma^2)

    def validate(self) -> None:
        if self.draws < 1000:
            raise ConfigError("draws must be at least 1000")
        if not 0 <= self.burn_in < self.draws:
            raise ConfigError("burn_in must lie in [0, draws)")
        if not 0.0 <= self.prior_inclusion <= 1.0:
            raise ConfigError("prior_inclusion must lie in [0, 1]")
        if not self.slab_scale > 0:
            raise ConfigError("slab_scale must be positive")


@dataclass
class InclusionRanking:
    """Posterior inclusion probabilities from the Gibbs sampler."""

    names: list[str]
    probabilities: np.ndarray
    draws: int
    seed: int
    converged: bool = True
    max_rhat: float = 1.0

    def ranking(self) -> list[str]:
        order = np.argsort(-self.probabilities, kind="stable")
        return [self.names[i] for i in order]

    def probability(self, name: str) -> float:
        return float(self.probabilities[self.names.index(name)])

    def to_json(self) -> str:
        return json.dumps({
            "draws": self.draws,
            "seed": self.seed,
            "converged": self.converged,
            "max_rhat": self.max_rhat,
            "inclusion": {n: float(p) for n, p
                          in zip(self.names, self.probabilities)},
        }, indent=2)

    def to_csv(self) -> str:
        lines = ["variable,inclusion_probability"]
        for name in self.ranking():
            lines.append(f"{name},{self.probability(name):.6f}")
        return "\n".join(lines) + "\n"


_IG_SHAPE = 0.01  # weakly informative inverse-gamma prior on sigma^2
_IG_RATE = 0.01


def _log_marginal(xtx: np.ndarray, xty: np.ndarray, yty: float, T: int,
                  included: np.ndarray, v: float) -> float:
    """log p(y | inclusion set), beta and sigma^2 integrated out."""
    idx = np.flatnonzero(included)
    k = idx.size
    a_n = _IG_SHAPE + T / 2.0
    if k == 0:
        b_n = _IG_RATE + 0.5 * yty
        return (-0.5 * T * np.log(2 * np.pi)
                + _IG_SHAPE * np.log(_IG_RATE) - a_n * np.log(b_n)
                + special.gammaln(a_n) - special.gammaln(_IG_SHAPE))
    a = xtx[np.ix_(idx, idx)] + np.eye(k) / v
    try:
        cho = linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularError([f"x{i + 1}" for i in idx]) from exc
    beta_hat = linalg.cho_solve(cho, xty[idx], check_finite=False)
    b_n = _IG_RATE + 0.5 * (yty - xty[idx] @ beta_hat)
    b_n = max(b_n, 1e-300)
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    return (-0.5 * T * np.log(2 * np.pi) - 0.5 * logdet - 0.5 * k * np.log(v)
            + _IG_SHAPE * np.log(_IG_RATE) - a_n * np.log(b_n)
            + special.gammaln(a_n) - special.gammaln(_IG_SHAPE))


def spike_slab_rank(features: np.ndarray, target: np.ndarray,
                    config: McmcConfig | None = None, seed: int = 0,
                    names: list[str] | None = None) -> InclusionRanking:
    """Collapsed Gibbs over inclusion indicators.

    Model: centered y = X_g beta_g + e with beta ~ N(0, v sigma^2 I) on
    the slab, a point mass at zero on the spike, Bernoulli(prior)
    inclusion, and an inverse-gamma prior on sigma^2. Indicators are
    updated one at a time from their marginal posterior odds. A split-R
    diagnostic over coefficient draws flags (but does not fail) chains
    that have not mixed.
    """
    config = config or McmcConfig()
    config.validate()
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(target, dtype=float).ravel()
    T, p = x.shape
    if len(y) != T:
        raise ShapeError("feature rows and target length differ")
    names = list(names) if names is not None else _default_names(p)

    # intercept handled by centering
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    xtx = xc.T @ xc
    xty = xc.T @ yc
    yty = float(yc @ yc)
    v = config.slab_scale
    pi = config.prior_inclusion

    rng = derive(seed, "spike-slab")
    gamma = np.zeros(p, dtype=bool)
    kept = config.draws - config.burn_in
    inclusion_sum = np.zeros(p)
    beta_draws = np.zeros((kept, p))

    if pi == 0.0:
        return InclusionRanking(names=names, probabilities=np.zeros(p),
                                draws=config.draws, seed=seed)

    current_lml = _log_marginal(xtx, xty, yty, T, gamma, v)
    log_odds_prior = np.inf if pi == 1.0 else np.log(pi) - np.log1p(-pi)
    for it in range(config.draws):
        for j in range(p):
            flipped = gamma.copy()
            flipped[j] = not flipped[j]
            flipped_lml = _log_marginal(xtx, xty, yty, T, flipped, v)
            if gamma[j]:
                lml_on, lml_off = current_lml, flipped_lml
            else:
                lml_on, lml_off = flipped_lml, current_lml
            if pi == 1.0:
                prob_on = 1.0
            else:
                prob_on = special.expit(lml_on - lml_off + log_odds_prior)
            take_on = rng.random() < prob_on
            if take_on != gamma[j]:
                gamma[j] = take_on
                current_lml = flipped_lml

        if it >= config.burn_in:
            inclusion_sum += gamma
            idx = np.flatnonzero(gamma)
            if idx.size:
                a = xtx[np.ix_(idx, idx)] + np.eye(idx.size) / v
                cho = linalg.cho_factor(a, lower=True, check_finite=False)
                beta_hat = linalg.cho_solve(cho, xty[idx], check_finite=False)
                b_n = max(_IG_RATE + 0.5 * (yty - xty[idx] @ beta_hat), 1e-300)
                sigma2 = b_n / rng.gamma(_IG_SHAPE + T / 2.0)
                noise = linalg.solve_triangular(
                    cho[0], rng.normal(size=idx.size),
                    lower=True, trans="T", check_finite=False)
                beta_draws[it - config.burn_in, idx] = (
                    beta_hat + np.sqrt(sigma2) * noise)

    probs = inclusion_sum / kept
    max_rhat = _split_rhat(beta_draws)
    converged = max_rhat <= 1.2
    if not converged:
        warnings.warn(
            f"spike-and-slab chain looks unmixed (split-R "
            f"{max_rhat:.2f} > 1.2)", ConvergenceWarning, stacklevel=2)
    return InclusionRanking(names=names, probabilities=probs,
                            draws=config.draws, seed=seed,
                            converged=converged, max_rhat=max_rhat)


def _split_rhat(draws: np.ndarray) -> float:
    """Largest split-R over columns; constant chains count as mixed."""
    n = draws.shape[0]
    if n < 4:
        return 1.0
    half = n // 2
    a, b = draws[:half], draws[half:2 * half]
    worst = 1.0
    for j in range(draws.shape[1]):
        chains = np.stack([a[:, j], b[:, j]])
        w = chains.var(axis=1, ddof=1).mean()
        if w < 1e-12:
            continue
        between = half * chains.mean(axis=1).var(ddof=1)
        var_plus = (half - 1) / half * w + between / half
        worst = max(worst, float(np.sqrt(var_plus / w)))
    return worst
