"""Model-X Gaussian knockoffs: covariance fits, decoupling diagonals,
conditional sampling, flip-sign feature statistics and per-run e-values.

A knockoff copy of the design is a synthetic negative control: pairwise
exchangeable with the originals and conditionally independent of the
response. Columns whose statistic ``W_j`` (original importance minus
knockoff importance) clears the data-driven threshold form the selected
support, with the threshold calibrated so the estimated false discovery
proportion stays below the target level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.covariance import GraphicalLassoCV, LedoitWolf

from .errors import ConfigurationError, EstimationError, NumericalError
from .shapley import mean_abs_shap

COVARIANCE_METHODS = ("ledoit_wolf", "graphical_lasso_cv")
STATISTICS = ("shap_ds", "swap", "swap_int")

SWAP_INT_GRID = tuple(0.5 * k for k in range(1, 11))  # 0.5 .. 5.0, step 0.5


@dataclass
class CovarianceModel:
    """Estimated feature covariance with its conditioning floor applied."""

    sigma: np.ndarray
    method: str
    shrinkage_or_alpha: float
    precision: np.ndarray | None = None


@dataclass
class KnockoffRealisation:
    """One sampled knockoff copy with its statistics and e-values."""

    knockoff_design: np.ndarray
    s_diag: np.ndarray
    statistic: np.ndarray
    threshold: float
    evalues: np.ndarray
    seed: int
    base_q: float


def _jitter_to_floor(sigma, rel_floor=1e-8):
    sigma = 0.5 * (sigma + sigma.T)
    p = sigma.shape[0]
    floor = rel_floor * np.trace(sigma) / p
    min_eig = float(np.linalg.eigvalsh(sigma)[0])
    if min_eig < floor:
        sigma = sigma + (floor - min_eig) * np.eye(p)
    return sigma


def estimate_covariance(X, method):
    """Fit a well-conditioned covariance of the design columns.

    ``ledoit_wolf`` applies the closed-form optimal shrinkage toward a
    scaled identity; ``graphical_lasso_cv`` picks the l1 penalty by 3-fold
    cross-validated likelihood over a 10-point logarithmic grid spanning
    ``[1e-3, 1]`` times the largest off-diagonal sample covariance.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < 3:
        raise ConfigurationError("covariance estimation needs n >= 3")
    if method not in COVARIANCE_METHODS:
        raise ConfigurationError(f"unknown covariance method {method!r}")
    if method == "ledoit_wolf":
        est = LedoitWolf().fit(X)
        sigma = est.covariance_
        param = float(est.shrinkage_)
        precision = None
    else:
        sample = np.cov(X, rowvar=False)
        off = np.abs(sample - np.diag(np.diag(sample)))
        top = float(off.max())
        if top <= 0:
            alphas = np.geomspace(1e-6, 1e-3, 10)
        else:
            alphas = np.geomspace(1e-3 * top, top, 10)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = GraphicalLassoCV(alphas=list(alphas), cv=3, max_iter=200).fit(X)
        except Exception as exc:  # sklearn raises FloatingPointError and friends
            raise EstimationError(f"graphical lasso CV failed: {exc}") from exc
        sigma = est.covariance_
        param = float(est.alpha_)
        precision = est.precision_.copy()
    if not np.all(np.isfinite(sigma)):
        raise EstimationError(f"{method} produced a non-finite covariance")
    return CovarianceModel(_jitter_to_floor(sigma), method, param, precision)


def covariance_to_correlation(sigma):
    sd = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return corr, sd


def _mvr_descent(corr, tol=1e-6, max_sweeps=1000):
    # minimise trace(G^-1) = sum_j 1/d_j + trace((2 Sigma - D)^-1)
    p = corr.shape[0]
    lam_min = float(np.linalg.eigvalsh(corr)[0])
    d = np.full(p, lam_min)
    A = 2.0 * corr - np.diag(d)
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(p):
            factor = cho_factor(A)
            ej = np.zeros(p)
            ej[j] = 1.0
            col = cho_solve(factor, ej)
            c1 = float(col[j])
            c2 = float(col @ col)
            delta = (1.0 - np.sqrt(c2) * d[j]) / (np.sqrt(c2) + c1)
            delta = float(np.clip(delta, 1e-10 - d[j], 0.999 / c1))
            if abs(delta) < 1e-14:
                continue
            d[j] += delta
            A[j, j] -= delta
            biggest = max(biggest, abs(delta))
        if biggest < tol:
            break
    return d


def solve_smatrix(sigma_correlation, method):
    """Decoupling diagonal ``d`` on the correlation scale.

    ``equi`` sets every entry to ``min(1, 2*lambda_min)``; ``mvr`` runs a
    coordinate descent that maximises how well each feature is hidden from
    its knockoff while keeping the joint covariance positive semidefinite.
    """
    corr = np.asarray(sigma_correlation, dtype=float)
    if np.max(np.abs(np.diag(corr) - 1.0)) > 1e-8:
        raise ConfigurationError("solve_smatrix expects a correlation matrix")
    lam_min = float(np.linalg.eigvalsh(corr)[0])
    if lam_min <= 0:
        raise EstimationError(f"correlation matrix is not positive definite ({lam_min})")
    if method == "equi":
        return np.full(corr.shape[0], min(1.0, 2.0 * lam_min))
    if method == "mvr":
        return _mvr_descent(corr)
    raise ConfigurationError(f"unknown S-matrix method {method!r}")


def joint_covariance(sigma, d):
    """The 2p x 2p joint covariance of originals and knockoffs."""
    p = sigma.shape[0]
    off = sigma - np.diag(d)
    G = np.empty((2 * p, 2 * p))
    G[:p, :p] = sigma
    G[p:, p:] = sigma
    G[:p, p:] = off
    G[p:, :p] = off
    return G


def _chol_with_jitter(mat, what):
    scale = max(float(np.trace(mat)) / mat.shape[0], 1e-300)
    eps = 1e-10
    for _ in range(40):
        try:
            return np.linalg.cholesky(mat + eps * scale * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError:
            eps *= 2.0
    raise NumericalError(f"Cholesky of the {what} failed even after jitter")


def sample_knockoffs(X, cov, d, seed):
    """Draw one Gaussian knockoff copy of ``X``.

    Rows are sampled independently from
    ``N(X - X Sigma^-1 diag(d), 2 diag(d) - diag(d) Sigma^-1 diag(d))``.
    Applications of ``Sigma^-1`` go through a Cholesky solve of the
    jittered covariance; the explicit inverse is never formed.
    """
    X = np.asarray(X, dtype=float)
    sigma = cov.sigma if isinstance(cov, CovarianceModel) else np.asarray(cov, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ConfigurationError("decoupling diagonal must be nonnegative")
    p = sigma.shape[0]
    if np.max(np.abs(d)) == 0.0:
        return X.copy()
    factor = cho_factor(_jitter_to_floor(sigma, 1e-10) )
    sinv_d = cho_solve(factor, np.diag(d))
    mean = X - X @ sinv_d
    cond = 2.0 * np.diag(d) - np.diag(d) @ sinv_d
    cond = 0.5 * (cond + cond.T)
    L = _chol_with_jitter(cond, "conditional knockoff covariance")
    rng = np.random.default_rng(seed)
    return mean + rng.standard_normal(X.shape) @ L.T


def _mse(y, pred):
    r = y - pred
    return float(r @ r) / y.size


def feature_statistic(X_aug, y, fit, variant="shap_ds"):
    """Flip-sign statistic ``W`` from a sparse fit on the augmented design.

    ``shap_ds``: mean absolute closed-form Shapley attribution of each
    original column minus that of its knockoff. ``swap``: increase in MSE
    when a column is overwritten by its partner, differenced between
    original and knockoff. ``swap_int``: the swap loss integrated over an
    interpolation path (trapezoid on ``SWAP_INT_GRID``, seeded by the
    unperturbed baseline).
    """
    X_aug = np.asarray(X_aug, dtype=float)
    y = np.asarray(y, dtype=float)
    coef = np.asarray(fit.coefficients, dtype=float)
    two_p = X_aug.shape[1]
    if two_p % 2 or coef.size != two_p:
        raise ConfigurationError("augmented design must hold originals then knockoffs")
    p = two_p // 2
    if variant == "shap_ds":
        z = mean_abs_shap(X_aug, coef)
    elif variant == "swap":
        z = np.empty(two_p)
        for j in range(two_p):
            partner = j + p if j < p else j - p
            swapped = X_aug.copy()
            swapped[:, j] = X_aug[:, partner]
            z[j] = _mse(y, swapped @ coef)
    elif variant == "swap_int":
        base = _mse(y, X_aug @ coef)
        z = np.zeros(two_p)
        for j in range(two_p):
            partner = j + p if j < p else j - p
            prev_lam, prev_loss = 0.0, base
            acc = 0.0
            for lam in SWAP_INT_GRID:
                swapped = X_aug.copy()
                swapped[:, j] = X_aug[:, j] + lam * (X_aug[:, partner] - X_aug[:, j])
                loss = _mse(y, swapped @ coef)
                acc += 0.5 * (lam - prev_lam) * (prev_loss + loss)
                prev_lam, prev_loss = lam, loss
            z[j] = acc
    else:
        raise ConfigurationError(f"unknown statistic variant {variant!r}")
    return z[:p] - z[p:]


def knockoff_threshold(W, q, offset=1):
    """Data-driven threshold and support of the (+) knockoff filter.

    The threshold is the smallest candidate ``tau`` with
    ``(offset + #{W <= -tau}) / #{W >= tau} <= q``; with no qualifying
    candidate the support is empty and ``tau`` is ``+inf``.
    """
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ConfigurationError("statistics must be finite")
    if offset not in (0, 1):
        raise ConfigurationError("offset must be 0 or 1")
    for tau in np.unique(np.abs(W[W != 0.0])):
        pos = int(np.sum(W >= tau))
        if pos == 0:
            continue
        neg = int(np.sum(W <= -tau))
        if (offset + neg) / pos <= q:
            return float(tau), np.flatnonzero(W >= tau)
    return np.inf, np.array([], dtype=int)


def evalues(W, tau_hat, p):
    """Per-candidate e-values of one run at threshold ``tau_hat``."""
    W = np.asarray(W, dtype=float)
    if np.isinf(tau_hat):
        return np.zeros(W.size)
    denom = 1.0 + int(np.sum(W <= -tau_hat))
    return p * (W >= tau_hat).astype(float) / denom


def knockoff_pvalues(W):
    """Empirical per-candidate p-values: ``(1 + #{W <= -|W_j|}) / p``."""
    W = np.asarray(W, dtype=float)
    p = W.size
    out = np.ones(p)
    for j in range(p):
        if W[j] > 0:
            out[j] = (1.0 + int(np.sum(W <= -abs(W[j])))) / p
    return out
