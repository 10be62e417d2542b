"""Principal components and the EM-estimated dynamic factor model."""

import warnings

import numpy as np
import pytest

from itac import ConvergenceWarning, dfm_fit, dfm_smooth, pca_fit, pca_transform
from itac.errors import NumericError, RankError, ShapeError
from itac.factors import DfmModel, EmConfig
from itac.rng import derive


def canonical_correlations(a, b):
    qa = np.linalg.qr(a - a.mean(axis=0))[0]
    qb = np.linalg.qr(b - b.mean(axis=0))[0]
    return np.linalg.svd(qa.T @ qb, compute_uv=False)


def simulate_dfm(rng, T=200, N=20, r=2, phi=0.7, idio=0.3):
    factors = np.zeros((T, r))
    for t in range(1, T):
        factors[t] = phi * factors[t - 1] + rng.normal(size=r)
    loadings = rng.normal(size=(N, r))
    data = factors @ loadings.T + idio * rng.normal(size=(T, N))
    return data, factors


# --- pca_fit -----------------------------------------------------------------


def test_pca_line_in_the_plane():
    t = np.linspace(-3, 3, 60)
    X = np.column_stack([t, t])
    model = pca_fit(X, 2)
    assert np.allclose(np.abs(model.loadings[:, 0]), 1 / np.sqrt(2), atol=1e-12)
    assert model.eigenvalues[1] == pytest.approx(0.0, abs=1e-12)


def test_pca_isotropic_noise():
    rng = derive(0, "isotropic")
    X = rng.normal(size=(4000, 2))
    model = pca_fit(X, 2)
    assert np.allclose(model.eigenvalues, 1.0, atol=0.1)


def test_pca_matches_dense_eigendecomposition():
    for seed in range(5):
        rng = derive(seed, "pca-oracle")
        X = rng.normal(size=(50, 20)) @ np.diag(rng.uniform(0.5, 3.0, size=20))
        k = 20
        model = pca_fit(X, k)
        c = X - X.mean(axis=0)
        cov = c.T @ c / (len(X) - 1)
        vals, vecs = np.linalg.eigh(cov)
        vals, vecs = vals[::-1], vecs[:, ::-1]
        assert np.allclose(model.eigenvalues, vals[:k], atol=1e-8)
        for j in range(k):
            v = vecs[:, j]
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            assert np.allclose(model.loadings[:, j], v, atol=1e-8)


def test_pca_loadings_orthonormal():
    rng = derive(1, "ortho")
    model = pca_fit(rng.normal(size=(80, 12)), 8)
    gram = model.loadings.T @ model.loadings
    assert np.allclose(gram, np.eye(8), atol=1e-8)


def test_pca_sign_convention():
    rng = derive(2, "signs")
    model = pca_fit(rng.normal(size=(60, 10)), 6)
    for j in range(6):
        col = model.loadings[:, j]
        assert col[np.argmax(np.abs(col))] > 0


def test_pca_explained_fractions():
    rng = derive(3, "explained")
    X = rng.normal(size=(100, 9)) * np.arange(1, 10)
    model = pca_fit(X, 5)
    frac = model.explained
    assert np.all(np.diff(frac) <= 1e-12)
    assert frac.sum() <= 1.0 + 1e-12


def test_pca_k_bounds():
    rng = derive(4, "bounds")
    X = rng.normal(size=(30, 5))
    with pytest.raises(RankError):
        pca_fit(X, 0)
    with pytest.raises(RankError):
        pca_fit(X, 6)
    # T-1 rows also cap the rank
    with pytest.raises(RankError):
        pca_fit(X[:4], 5)


def test_pca_rejects_non_finite():
    X = np.ones((20, 3))
    X[5, 1] = np.nan
    with pytest.raises(NumericError):
        pca_fit(X, 2)


# --- pca_transform -----------------------------------------------------------


def test_pca_scores_variance_matches_eigenvalues():
    rng = derive(5, "scores")
    X = rng.normal(size=(120, 7)) * np.arange(1, 8)
    model = pca_fit(X, 4)
    scores = pca_transform(model, X)
    assert np.allclose(scores.values.var(axis=0, ddof=1),
                       model.eigenvalues, atol=1e-8)


def test_pca_transform_centered_input_gives_zero_scores():
    rng = derive(6, "zero-scores")
    X = rng.normal(size=(40, 5))
    model = pca_fit(X, 3)
    rows = np.tile(model.means, (7, 1))
    assert np.allclose(pca_transform(model, rows).values, 0.0, atol=1e-12)


def test_pca_transform_shape():
    rng = derive(7, "shape")
    X = rng.normal(size=(214, 26))
    model = pca_fit(X, 6)
    assert pca_transform(model, X).values.shape == (214, 6)


def test_pca_transform_width_mismatch():
    rng = derive(8, "mismatch")
    model = pca_fit(rng.normal(size=(30, 5)), 2)
    with pytest.raises(ShapeError):
        pca_transform(model, rng.normal(size=(10, 4)))


# --- dfm_fit -------------------------------------------------------------------


def test_dfm_recovers_planted_factor_space():
    rng = derive(0, "dfm-oracle")
    data, factors = simulate_dfm(rng)
    model = dfm_fit(data, 2)
    est = dfm_smooth(model, data)
    cc = canonical_correlations(est.values, factors)
    assert cc.min() > 0.95


def test_dfm_loglik_nondecreasing():
    rng = derive(1, "dfm-ll")
    data, _ = simulate_dfm(rng, T=120, N=10)
    model = dfm_fit(data, 2)
    assert len(model.ll_path) >= 2
    assert np.all(np.diff(model.ll_path) >= -1e-8)


def test_dfm_stationary_and_positive_noise():
    rng = derive(2, "dfm-inv")
    data, _ = simulate_dfm(rng, T=150, N=12)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = dfm_fit(data, 3)
    assert np.all(model.idio_var > 0)
    assert np.max(np.abs(np.linalg.eigvals(model.transition))) < 1.0


def test_dfm_rank_errors():
    rng = derive(3, "dfm-rank")
    data, _ = simulate_dfm(rng, T=60, N=6)
    with pytest.raises(RankError):
        dfm_fit(data, 0)
    with pytest.raises(RankError):
        dfm_fit(data, 7)
    with pytest.raises(RankError):
        dfm_fit(data[:25], 3)  # needs T >= 10r


def test_dfm_non_convergence_is_a_warning():
    rng = derive(4, "dfm-warn")
    data, _ = simulate_dfm(rng, T=100, N=8)
    with pytest.warns(ConvergenceWarning):
        model = dfm_fit(data, 2, EmConfig(max_iter=2, tol=1e-12))
    assert not model.converged
    assert model.n_iter == 2


def test_dfm_ridge_config_accepted():
    rng = derive(5, "dfm-ridge")
    data, _ = simulate_dfm(rng, T=120, N=10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = dfm_fit(data, 2, EmConfig(series_length=1.2))
    assert len(model.ll_path) > 0
    assert np.all(np.isfinite(model.loadings))


def test_dfm_scale_consistency():
    """Scaling features by c rescales the identified parts of the model.

    The split of scale between loadings and factor covariance is not
    identified (any diagonal similarity leaves the likelihood unchanged),
    so the check targets quantities invariant to that split: the implied
    observation covariance, the idiosyncratic variances, the transition
    eigenvalues and the smoothed factor subspace.  The initial state
    prior is an absolute covariance, so the scaled fit needs c^2 times
    the base prior for the two EM trajectories to correspond.
    """
    rng = derive(6, "dfm-scale")
    data, _ = simulate_dfm(rng, T=150, N=10)
    c = 3.0
    # pin the iteration count so both fits apply the same EM map
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        base = dfm_fit(data, 2, EmConfig(max_iter=30, tol=0.0))
        scaled = dfm_fit(c * data, 2,
                         EmConfig(max_iter=30, tol=0.0, init_cov=c ** 2 * 10.0))
    assert np.allclose(scaled.means, c * base.means, atol=1e-10)
    assert np.allclose(scaled.idio_var, c ** 2 * base.idio_var, rtol=1e-9)
    obs_base = base.loadings @ base.factor_cov @ base.loadings.T
    obs_scaled = scaled.loadings @ scaled.factor_cov @ scaled.loadings.T
    assert np.allclose(obs_scaled, c ** 2 * obs_base, rtol=1e-9, atol=1e-12)
    eig_base = np.sort(np.linalg.eigvals(base.transition))
    eig_scaled = np.sort(np.linalg.eigvals(scaled.transition))
    assert np.allclose(eig_base, eig_scaled, atol=1e-8)
    f_base = dfm_smooth(base, data)
    f_scaled = dfm_smooth(scaled, c * data)
    cc = canonical_correlations(f_base.values, f_scaled.values)
    assert cc.min() > 1.0 - 1e-9


# --- dfm_smooth ------------------------------------------------------------------


def test_smoother_tracks_noiseless_factors():
    rng = derive(7, "dfm-clean")
    data, factors = simulate_dfm(rng, T=200, N=20, idio=1e-3)
    model = dfm_fit(data, 2)
    est = dfm_smooth(model, data)
    cc = canonical_correlations(est.values, factors)
    assert cc.min() > 0.999


def test_single_observation_equals_filter_update():
    lam = np.array([[1.0], [0.5]])
    idio = np.array([0.1, 0.2])
    model = DfmModel(loadings=lam, transition=np.array([[0.7]]),
                     factor_cov=np.array([[0.3]]), idio_var=idio,
                     means=np.zeros(2), r=1, init_cov=10.0)
    y = np.array([[1.3, 0.4]])
    p0 = model.init_cov * np.eye(1)
    gain = p0 @ lam.T @ np.linalg.inv(lam @ p0 @ lam.T + np.diag(idio))
    expected = gain @ y[0]
    out = dfm_smooth(model, y)
    assert out.values.shape == (1, 1)
    assert out.values[0, 0] == pytest.approx(expected[0], abs=1e-12)


def test_smoother_width_mismatch():
    rng = derive(8, "dfm-shape")
    data, _ = simulate_dfm(rng, T=80, N=8)
    model = dfm_fit(data, 2)
    with pytest.raises(ShapeError):
        dfm_smooth(model, data[:, :5])
