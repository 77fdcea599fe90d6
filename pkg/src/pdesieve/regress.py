"""Regression estimators used throughout the pipeline.

All least-squares losses are in the form ``(1/2n)||y - X b||^2``; ridge
penalties enter as ``lam * ||b||^2``, so the normal equations read
``(X'X + 2 n lam I) b = X'y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (
    BudgetError,
    ConfigurationError,
    ConvergenceError,
    DegenerateSampleError,
    SingularityError,
)

DEFAULT_RIDGE = 1e-5


def library_ridge(n, base=DEFAULT_RIDGE):
    """Ridge value for unit-norm-column designs.

    The conventional default ``1e-5`` is calibrated for unit-variance
    columns (Euclidean norm ``sqrt(n)``); weak-form libraries standardise
    columns to unit norm, where the same penalty-to-loss ratio requires
    ``base / n``.
    """
    return base / n


@dataclass
class SparseFit:
    """A sparse linear fit: coefficients are nonzero exactly on ``support``."""

    coefficients: np.ndarray
    support: tuple[int, ...]
    ridge_penalty: float
    cv_score: float = field(default=np.nan)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        mask = np.zeros(coef.size, dtype=bool)
        mask[list(self.support)] = True
        coef[~mask] = 0.0
        self.coefficients = coef
        self.support = tuple(sorted(int(j) for j in self.support))


def kfold_indices(n, k, seed):
    """Deterministic shuffled k-fold split, returned as (train, test) pairs."""
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i in range(k):
        test = folds[i]
        train = np.concatenate([folds[j] for j in range(k) if j != i])
        out.append((train, test))
    return out


def fit_linear(X, y, ridge_penalty=0.0):
    """OLS (``ridge_penalty=0``) or ridge minimiser of the shared objective."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if ridge_penalty < 0:
        raise ConfigurationError("ridge penalty must be >= 0")
    if ridge_penalty == 0.0:
        coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < p:
            raise SingularityError(
                f"design has rank {rank} < {p}; OLS needs full column rank"
            )
        return coef
    gram = X.T @ X + 2.0 * n * ridge_penalty * np.eye(p)
    return np.linalg.solve(gram, X.T @ y)


def ridge_loss(X, y, coef, ridge_penalty):
    resid = y - X @ coef
    return 0.5 * np.mean(resid**2) + ridge_penalty * float(coef @ coef)


def _soft(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


def fit_elastic_net(X, y, lam, l1_ratio, max_iter=10_000, tol=1e-8):
    """Coordinate-descent elastic net.

    Minimises ``(1/2n)||y - X b||^2 + lam (l1_ratio ||b||_1 +
    (1 - l1_ratio)/2 ||b||^2)``. Converged when the largest coordinate
    update in a sweep drops below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 0.0 <= l1_ratio <= 1.0:
        raise ConfigurationError("l1_ratio must lie in [0, 1]")
    if lam < 0:
        raise ConfigurationError("lam must be >= 0")
    col_sq = np.einsum("ij,ij->j", X, X) / n
    beta = np.zeros(p)
    resid = y.copy()
    l1 = lam * l1_ratio
    l2 = lam * (1.0 - l1_ratio)
    for _ in range(max_iter):
        max_change = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            rho = X[:, j] @ resid / n + col_sq[j] * old
            new = _soft(rho, l1) / (col_sq[j] + l2)
            if new != old:
                resid += X[:, j] * (old - new)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            return beta
    raise ConvergenceError(
        f"elastic net did not converge in {max_iter} sweeps "
        f"(last max coordinate update {max_change:.3e})"
    )


def elastic_net_kkt_violation(X, y, beta, lam, l1_ratio):
    """Largest stationarity violation of the elastic-net subgradient."""
    n = X.shape[0]
    grad = -X.T @ (y - X @ beta) / n + lam * (1.0 - l1_ratio) * beta
    l1 = lam * l1_ratio
    viol = np.where(
        beta != 0.0,
        np.abs(grad + l1 * np.sign(beta)),
        np.maximum(np.abs(grad) - l1, 0.0),
    )
    return float(np.max(viol))


def screen_smax(X, y, kappas=(0.5, 0.75, 1.0), fold_seed=0):
    """Support-size budget from plug-in elastic-net screening.

    Fits the elastic net (l1 ratio 0.5) at ``lam = kappa * sigma *
    sqrt(log p / n)`` for each ``kappa``, picks the best by 3-fold CV MSE
    and returns its nonzero count clamped to [2, 20]. ``sigma`` is the
    residual sd of an OLS fit when ``n > 2p`` and of a light ridge fit
    otherwise.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n > 2 * p:
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    else:
        coef = fit_linear(X, y, ridge_penalty=1e-3)
    sigma = float(np.std(y - X @ coef))
    lams = [k * sigma * math.sqrt(math.log(p) / n) for k in kappas]

    folds = kfold_indices(n, 3, fold_seed)
    cv_mse = []
    for lam in lams:
        errs = []
        for train, test in folds:
            beta = fit_elastic_net(X[train], y[train], lam, 0.5)
            errs.append(float(np.mean((y[test] - X[test] @ beta) ** 2)))
        cv_mse.append(np.mean(errs))
    best = int(np.argmin(cv_mse))
    beta = fit_elastic_net(X, y, lams[best], 0.5)
    s = int(np.count_nonzero(beta))
    return int(np.clip(s, 2, 20))


# ---------------------------------------------------------------------------
# l0-constrained splicing


def _refit(gram, xty, support, n, ridge_penalty):
    idx = np.asarray(support, dtype=int)
    sub = gram[np.ix_(idx, idx)] + 2.0 * n * ridge_penalty * np.eye(idx.size)
    return np.linalg.solve(sub, xty[idx])


def _penalised_loss(gram, xty, yty, support, coef_s, n, ridge_penalty):
    idx = np.asarray(support, dtype=int)
    rss = yty - 2.0 * coef_s @ xty[idx] + coef_s @ gram[np.ix_(idx, idx)] @ coef_s
    return 0.5 * rss / n + ridge_penalty * float(coef_s @ coef_s)


_SPLICE_NEIGHBOURS = 4  # sacrifice/gain candidates examined per exchange round


def splice_at_size(X, y, s, ridge_penalty=DEFAULT_RIDGE, max_iter=100, return_trace=False):
    """Local-exchange search for the best size-``s`` support.

    Starts from the top-``s`` columns by absolute correlation. Each round
    ranks active coordinates by sacrifice (loss increase if dropped) and
    inactive ones by gain (loss decrease if added), then evaluates single
    and double exchanges among the few lowest-sacrifice and highest-gain
    candidates, keeping the best swap that strictly lowers the penalised
    loss. Heavily collinear libraries need the small neighbourhood around
    the worst-vs-best pair; a single greedy pair stalls in local basins.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 1 <= s <= p:
        raise ConfigurationError(f"support size {s} outside [1, {p}]")
    gram = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)
    diag = np.diag(gram) / n

    order = np.argsort(-np.abs(xty), kind="stable")
    active = sorted(order[:s].tolist())
    coef_s = _refit(gram, xty, active, n, ridge_penalty)
    loss = _penalised_loss(gram, xty, yty, active, coef_s, n, ridge_penalty)
    trace = [loss]

    from itertools import combinations as _combos

    for _ in range(max_iter):
        beta = np.zeros(p)
        beta[active] = coef_s
        resid_corr = (xty - gram @ beta) / n
        sacrifice = (0.5 * diag[active] + ridge_penalty) * coef_s**2
        inactive = [j for j in range(p) if j not in set(active)]
        if not inactive:
            break
        gains = resid_corr[inactive] ** 2 / (2.0 * (diag[inactive] + 2.0 * ridge_penalty))
        drop_pool = [active[i] for i in np.argsort(sacrifice, kind="stable")[:_SPLICE_NEIGHBOURS]]
        add_pool = [inactive[i] for i in np.argsort(-gains, kind="stable")[:_SPLICE_NEIGHBOURS]]
        best = None
        for c in range(1, min(s, 2, len(inactive)) + 1):
            for drop in _combos(drop_pool, c):
                for add in _combos(add_pool, c):
                    cand = sorted(set(active) - set(drop) | set(add))
                    cand_coef = _refit(gram, xty, cand, n, ridge_penalty)
                    cand_loss = _penalised_loss(
                        gram, xty, yty, cand, cand_coef, n, ridge_penalty
                    )
                    if cand_loss < loss - 1e-12 and (best is None or cand_loss < best[0]):
                        best = (cand_loss, cand, cand_coef)
        if best is None:
            break
        loss, active, coef_s = best
        trace.append(loss)

    coef = np.zeros(p)
    coef[active] = coef_s
    fit = SparseFit(coef, tuple(active), ridge_penalty, cv_score=loss)
    return (fit, trace) if return_trace else fit


def _golden_section_ints(fn, lo, hi):
    """Golden-section minimisation over an integer interval, memoised."""
    cache = {}

    def ev(s):
        if s not in cache:
            cache[s] = fn(s)
        return cache[s]

    a, b = lo, hi
    ratio = (math.sqrt(5.0) - 1.0) / 2.0
    while b - a > 3:
        step = int(round(ratio * (b - a)))
        g1 = max(min(b - step, b - 1), a + 1)
        g2 = max(min(a + step, b - 1), a + 1)
        if g1 >= g2:
            g1, g2 = a + 1, a + 2
        if ev(g1) <= ev(g2):
            b = g2
        else:
            a = g1
    for s in range(a, b + 1):
        ev(s)
    return min(cache, key=lambda s: (cache[s], s)), cache


def fit_splicing(X, y, s_max, ridge_penalty=DEFAULT_RIDGE, fold_seed=0):
    """Best-subset fit with the size chosen by golden-section search on CV error."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 1 <= s_max <= p:
        raise ConfigurationError(f"s_max {s_max} outside [1, {p}]")
    folds = kfold_indices(n, 3, fold_seed)

    def cv_error(s):
        errs = []
        for train, test in folds:
            fit = splice_at_size(X[train], y[train], s, ridge_penalty)
            errs.append(float(np.mean((y[test] - X[test] @ fit.coefficients) ** 2)))
        return float(np.mean(errs))

    if s_max == 1:
        best, cache = 1, {1: cv_error(1)}
    else:
        best, cache = _golden_section_ints(cv_error, 1, s_max)
    fit = splice_at_size(X, y, best, ridge_penalty)
    fit.cv_score = cache[best]
    return fit


def exhaustive_best_subset(X, y, k, ridge_penalty=DEFAULT_RIDGE, budget=1_000_000):
    """RSS-minimal size-``k`` subset by full enumeration with ridge refit."""
    from itertools import combinations

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 1 <= k <= p:
        raise ConfigurationError(f"k {k} outside [1, {p}]")
    if math.comb(p, k) > budget:
        raise BudgetError(f"C({p},{k}) exceeds the enumeration budget {budget}")
    gram = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)
    eye = 2.0 * n * ridge_penalty * np.eye(k)
    best_rss, best_support, best_coef = np.inf, None, None
    for subset in combinations(range(p), k):
        idx = np.asarray(subset)
        sub = gram[np.ix_(idx, idx)] + eye
        try:
            b = np.linalg.solve(sub, xty[idx])
        except np.linalg.LinAlgError:
            continue
        rss = yty - 2.0 * b @ xty[idx] + b @ gram[np.ix_(idx, idx)] @ b
        if rss < best_rss - 1e-15:
            best_rss, best_support, best_coef = rss, subset, b
    if best_support is None:
        raise SingularityError("no subset produced a solvable system")
    coef = np.zeros(p)
    coef[list(best_support)] = best_coef
    return SparseFit(coef, best_support, ridge_penalty, cv_score=float(best_rss))


# ---------------------------------------------------------------------------
# quantile and RIF regression


def aic_value(n, sigma2, s):
    """Akaike information criterion from the ML noise-variance estimate."""
    return n * math.log(sigma2) + 2.0 * s


def ebic_value(n, sigma2, s, pool, gamma=1.0):
    """Extended BIC with combinatorial penalty over a pool of ``pool`` terms."""
    return n * math.log(sigma2) + s * math.log(n) + 2.0 * gamma * math.log(math.comb(pool, s))


def pinball_loss(u, tau):
    u = np.asarray(u, dtype=float)
    return float(np.mean(u * (tau - (u < 0))))


def _smoothed_pinball_and_grad(beta, X, y, tau, lam, h):
    u = y - X @ beta
    absu = np.abs(u)
    quad = absu <= h
    hub = np.where(quad, u**2 / (2.0 * h), absu - 0.5 * h)
    obj = float(np.mean((tau - 0.5) * u + 0.5 * hub)) + lam * float(beta @ beta)
    psi = (tau - 0.5) + 0.5 * np.clip(u / h, -1.0, 1.0)
    grad = -X.T @ psi / X.shape[0] + 2.0 * lam * beta
    return obj, grad


def fit_quantile(X, y, tau, l2_penalty, smoothing=None, max_iter=500):
    """l2-penalised quantile regression via a smoothed (Huberised) pinball.

    The returned fit never does worse than the zero coefficient vector in
    exact pinball loss.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0.0 < tau < 1.0:
        raise ConfigurationError("tau must lie in (0, 1)")
    if l2_penalty < 0:
        raise ConfigurationError("l2 penalty must be >= 0")
    if smoothing is None:
        smoothing = 1e-4 * max(float(np.std(y)), 1e-12)
    res = minimize(
        _smoothed_pinball_and_grad,
        np.zeros(X.shape[1]),
        args=(X, y, tau, l2_penalty, smoothing),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-10},
    )
    _, grad = _smoothed_pinball_and_grad(res.x, X, y, tau, l2_penalty, smoothing)
    if not res.success and np.linalg.norm(grad) > 1e-5 * max(1.0, float(np.std(y))):
        raise ConvergenceError(f"quantile regression failed to converge: {res.message}")
    beta = res.x
    if pinball_loss(y - X @ beta, tau) > pinball_loss(y, tau):
        beta = np.zeros(X.shape[1])
    return beta


def _silverman_bandwidth(y):
    n = y.size
    sd = float(np.std(y))
    iqr = float(np.subtract(*np.percentile(y, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * n ** (-0.2)


def fit_rif(X, y, tau):
    """Recentred-influence-function regression for the ``tau`` quantile.

    Returns OLS coefficients of the RIF values on ``X`` together with
    HC3 heteroscedasticity-robust standard errors. The RIF values are
    recentred so that their sample mean equals the sample quantile exactly.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < p + 2:
        raise ConfigurationError(f"fit_rif needs n >= p + 2 (n={n}, p={p})")
    qhat = float(np.quantile(y, tau))
    h = _silverman_bandwidth(y)
    if h <= 0:
        raise DegenerateSampleError("degenerate response: zero spread for the KDE")
    z = (qhat - y) / h
    fhat = float(np.mean(np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi))) / h
    if fhat <= 1e-300:
        raise DegenerateSampleError("kernel density vanishes at the sample quantile")
    influence = (tau - (y <= qhat).astype(float)) / fhat
    rif = qhat + influence - influence.mean()

    coef, _, rank, _ = np.linalg.lstsq(X, rif, rcond=None)
    if rank < p:
        raise SingularityError("RIF design is rank deficient")
    resid = rif - X @ coef
    q, _ = np.linalg.qr(X)
    leverage = np.einsum("ij,ij->i", q, q)
    w = resid**2 / (1.0 - leverage) ** 2
    bread = np.linalg.inv(X.T @ X)
    meat = X.T @ (X * w[:, None])
    cov = bread @ meat @ bread
    se = np.sqrt(np.diag(cov))
    return coef, se
