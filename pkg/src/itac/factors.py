"""Linear index constructions: principal components and a dynamic factor model.

Both reduce a stationary feature panel to a small set of common factors.
PCA is the closed-form benchmark (Z = XW on the centered panel). The
dynamic factor model adds explicit dynamics, x_t = L f_t + e_t with a
VAR(1) factor process, estimated by EM: Kalman smoothing in the E-step
and closed-form regressions in the M-step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConvergenceWarning, NumericError, RankError, ShapeError


@dataclass
class FactorSeries:
    """T x r factor values anchored at an absolute start month."""

    values: np.ndarray
    start: int = 0

    def __post_init__(self) -> None:
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.start + self.values.shape[0] - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]


def _fix_signs(loadings: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    flips = np.ones(loadings.shape[1])
    for j in range(loadings.shape[1]):
        anchor = np.argmax(np.abs(loadings[:, j]))
        if loadings[anchor, j] < 0:
            flips[j] = -1.0
    return flips


def _check_finite(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise ShapeError("feature matrix must be two-dimensional")
    if not np.isfinite(features).all():
        raise NumericError("feature matrix contains non-finite values")
    return features


# --- PCA ---------------------------------------------------------------------

@dataclass
class PcaModel:
    """Top-k eigenvectors of the sample feature covariance.

    ``loadings`` columns are orthonormal, ordered by descending
    eigenvalue, each with its largest-magnitude entry positive.
    ``scales`` is all ones unless the model was fit on rescaled
    (correlation) features.
    """

    loadings: np.ndarray  # N x k
    eigenvalues: np.ndarray  # length k, nonincreasing
    means: np.ndarray  # length N
    scales: np.ndarray  # length N
    k: int
    total_variance: float

    @property
    def explained(self) -> np.ndarray:
        """Fraction of total variance carried by each component."""
        return self.eigenvalues / self.total_variance


def pca_fit(features: np.ndarray, k: int, scale: bool = False) -> PcaModel:
    """Principal components of the centered features.

    ``scale=True`` divides each centered column by its standard deviation
    first (correlation PCA) for panels with incomparable scales; the
    aligned datasets produced upstream are already standardized, so the
    default works on the covariance as given.
    """
    features = _check_finite(features)
    T, N = features.shape
    if not 1 <= k <= min(T - 1, N):
        raise RankError(f"component count {k} outside [1, {min(T - 1, N)}]")

    means = features.mean(axis=0)
    centered = features - means
    if scale:
        scales = centered.std(axis=0, ddof=1)
        if (scales < 1e-12).any():
            raise NumericError("zero-variance column under correlation scaling")
        centered = centered / scales
    else:
        scales = np.ones(N)

    # Singular values give the eigenvalues of the sample covariance
    # directly: S^2 / (T - 1); right singular vectors are the loadings.
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = sv[:k] ** 2 / (T - 1)
    loadings = vt[:k].T
    loadings = loadings * _fix_signs(loadings)
    total = float(np.sum(sv**2) / (T - 1))
    return PcaModel(
        loadings=loadings,
        eigenvalues=eigenvalues,
        means=means,
        scales=scales,
        k=k,
        total_variance=total,
    )


def pca_transform(model: PcaModel, features: np.ndarray, start: int = 0) -> FactorSeries:
    """Project features onto the fitted components: Z = (X - means) W."""
    features = _check_finite(features)
    if features.shape[1] != model.loadings.shape[0]:
        raise ShapeError(
            f"feature width {features.shape[1]} does not match model "
            f"width {model.loadings.shape[0]}")
    centered = (features - model.means) / model.scales
    return FactorSeries(centered @ model.loadings, start=start)


# --- dynamic factor model ------------------------------------------------------

@dataclass
class EmConfig:
    """EM controls.

    ``series_length`` is an opaque ridge weight added to the M-step
    normal equations; zero keeps the updates exact maximizers, which is
    what guarantees a nondecreasing log-likelihood path.
    """

    max_iter: int = 100
    tol: float = 1e-6
    series_length: float = 0.0
    init_cov: float = 10.0  # fixed prior variance of the initial factor


@dataclass
class DfmModel:
    """State-space parameters of the fitted factor model.

    Observation: x_t = loadings f_t + e_t,  e ~ N(0, diag(idio_var)).
    State: f_t = transition f_{t-1} + u_t,  u ~ N(0, factor_cov),
    f_1 ~ N(0, init_cov I). ``ll_path`` records the log-likelihood at
    each EM iteration (computed before that iteration's M-step).
    """

    loadings: np.ndarray  # N x r
    transition: np.ndarray  # r x r
    factor_cov: np.ndarray  # r x r
    idio_var: np.ndarray  # length N, strictly positive
    means: np.ndarray  # length N
    r: int
    init_cov: float = 10.0
    log_likelihood: float = float("nan")
    ll_path: np.ndarray = field(default_factory=lambda: np.empty(0))
    converged: bool = True
    n_iter: int = 0
    stabilized: bool = False


def _kalman_pass(x: np.ndarray, lam: np.ndarray, a: np.ndarray, q: np.ndarray,
                 r_diag: np.ndarray, p0: np.ndarray):
    """Kalman filter + RTS smoother with lag-one covariances.

    Returns smoothed means (T x r), smoothed covariances (T x r x r),
    lag-one covariances Cov(f_t, f_{t-1} | all data) for t >= 1, and the
    log-likelihood of the data under the parameters.
    """
    T, N = x.shape
    r = lam.shape[1]
    eye_r = np.eye(r)

    f_pred = np.zeros((T, r))
    p_pred = np.zeros((T, r, r))
    f_filt = np.zeros((T, r))
    p_filt = np.zeros((T, r, r))
    ll = 0.0
    last_gain = None

    for t in range(T):
        if t == 0:
            fp = np.zeros(r)
            pp = p0.copy()
        else:
            fp = a @ f_filt[t - 1]
            pp = a @ p_filt[t - 1] @ a.T + q
        innov = x[t] - lam @ fp
        s = lam @ pp @ lam.T
        s[np.diag_indices(N)] += r_diag
        try:
            cho = linalg.cho_factor(s, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericError(f"singular innovation covariance at t={t}") from exc
        ll -= 0.5 * (N * np.log(2 * np.pi)
                     + 2 * np.sum(np.log(np.diag(cho[0])))
                     + innov @ linalg.cho_solve(cho, innov, check_finite=False))
        gain = pp @ linalg.cho_solve(cho, lam, check_finite=False).T
        f_filt[t] = fp + gain @ innov
        joseph = eye_r - gain @ lam
        p_filt[t] = joseph @ pp @ joseph.T + (gain * r_diag) @ gain.T
        f_pred[t], p_pred[t] = fp, pp
        last_gain = gain

    f_smooth = f_filt.copy()
    p_smooth = p_filt.copy()
    smoother_gain = np.zeros((T, r, r))
    for t in range(T - 2, -1, -1):
        j = np.linalg.solve(p_pred[t + 1].T, (p_filt[t] @ a.T).T).T
        smoother_gain[t] = j
        f_smooth[t] = f_filt[t] + j @ (f_smooth[t + 1] - f_pred[t + 1])
        p_smooth[t] = p_filt[t] + j @ (p_smooth[t + 1] - p_pred[t + 1]) @ j.T

    # lag-one smoothed covariances, backwards recursion seeded at t = T-1
    p_lag = np.zeros((T, r, r))
    if T > 1:
        p_lag[T - 1] = (eye_r - last_gain @ lam) @ a @ p_filt[T - 2]
        for t in range(T - 2, 0, -1):
            p_lag[t] = (p_filt[t] @ smoother_gain[t - 1].T
                        + smoother_gain[t]
                        @ (p_lag[t + 1] - a @ p_filt[t])
                        @ smoother_gain[t - 1].T)
    return f_smooth, p_smooth, p_lag, ll


def dfm_fit(features: np.ndarray, r: int, config: EmConfig | None = None) -> DfmModel:
    """Estimate the factor model by EM.

    Loadings and factors start from PCA; each iteration smooths the
    factors under current parameters, then re-solves the loading,
    transition, and variance regressions in closed form. Stops when the
    relative log-likelihood change drops below ``tol``. Non-convergence
    is recorded on the model (and warned), not raised.
    """
    config = config or EmConfig()
    x = _check_finite(features)
    T, N = x.shape
    if not 1 <= r <= N:
        raise RankError(f"factor count {r} outside [1, {N}]")
    if T < 10 * r:
        raise RankError(f"need at least {10 * r} rows to fit {r} factors, got {T}")

    means = x.mean(axis=0)
    xc = x - means
    ridge = config.series_length

    # PCA warm start
    pca = pca_fit(x, r)
    lam = pca.loadings.copy()
    f = xc @ lam
    if T > 1:
        past, pres = f[:-1], f[1:]
        a = np.linalg.solve(past.T @ past + 1e-8 * np.eye(r), past.T @ pres).T
        resid = pres - past @ a.T
        q = resid.T @ resid / max(T - 1, 1)
    else:
        a = np.zeros((r, r))
        q = np.eye(r)
    q = _make_spd(q)
    r_diag = np.maximum(np.var(xc - f @ lam.T, axis=0), 1e-8)
    p0 = config.init_cov * np.eye(r)

    ll_path = []
    ll_prev = -np.inf
    converged = False
    eye_ridge = ridge * np.eye(r)
    for iteration in range(config.max_iter):
        f_s, p_s, p_lag, ll = _kalman_pass(xc, lam, a, q, r_diag, p0)
        ll_path.append(ll)
        if iteration > 0 and abs(ll - ll_prev) <= config.tol * (abs(ll_prev) + 1e-12):
            converged = True
            break
        ll_prev = ll

        # second moments E[f f'] and cross moments from the smoother
        eff = p_s + f_s[:, :, None] * f_s[:, None, :]
        s11 = eff[1:].sum(axis=0)
        s00 = eff[:-1].sum(axis=0)
        s10 = (p_lag[1:] + f_s[1:, :, None] * f_s[:-1, None, :]).sum(axis=0)

        a = np.linalg.solve((s00 + eye_ridge).T, s10.T).T
        q = _make_spd((s11 - a @ s10.T) / max(T - 1, 1))

        sum_eff = eff.sum(axis=0)
        lam = np.linalg.solve((sum_eff + eye_ridge).T, (xc.T @ f_s).T).T
        # E[(x - L f)^2] per series under the smoothed factor distribution
        r_diag = np.maximum(
            (np.sum(xc * xc, axis=0)
             - 2 * np.sum(xc * (f_s @ lam.T), axis=0)
             + np.einsum("ij,jk,ik->i", lam, sum_eff, lam)) / T,
            1e-8)

    model = DfmModel(
        loadings=lam, transition=a, factor_cov=q, idio_var=r_diag,
        means=means, r=r, init_cov=config.init_cov,
        log_likelihood=ll_path[-1], ll_path=np.array(ll_path),
        converged=converged, n_iter=len(ll_path), stabilized=False,
    )
    if not converged:
        warnings.warn(
            f"EM stopped after {config.max_iter} iterations without "
            f"meeting tol={config.tol:g}", ConvergenceWarning, stacklevel=2)

    # sign convention: flip factor axes so each loading column's
    # largest-magnitude entry is positive (D L D-style similarity keeps
    # the model equivalent)
    flips = _fix_signs(model.loadings)
    d = np.diag(flips)
    model.loadings = model.loadings @ d
    model.transition = d @ model.transition @ d
    model.factor_cov = d @ model.factor_cov @ d

    rho = np.max(np.abs(np.linalg.eigvals(model.transition)))
    if rho >= 1.0:
        model.transition *= 0.99 / rho
        model.stabilized = True
    return model


def _make_spd(m: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """Symmetrize and floor eigenvalues so downstream solves succeed."""
    m = (m + m.T) / 2
    w, v = np.linalg.eigh(m)
    return (v * np.maximum(w, floor)) @ v.T


def dfm_smooth(model: DfmModel, features: np.ndarray, start: int = 0) -> FactorSeries:
    """Kalman-smoothed factor means for every row of ``features``."""
    x = _check_finite(features)
    if x.shape[1] != model.loadings.shape[0]:
        raise ShapeError(
            f"feature width {x.shape[1]} does not match model width "
            f"{model.loadings.shape[0]}")
    f_s, _, _, _ = _kalman_pass(
        x - model.means, model.loadings, model.transition, model.factor_cov,
        model.idio_var, model.init_cov * np.eye(model.r))
    return FactorSeries(f_s, start=start)
