"""FDR-controlled screening by aggregating many knockoff realisations.

E-values from ``K`` independent knockoff runs, all thresholded at one fixed
base level, are averaged per candidate and fed to a size-constrained e-BH
step-up rule. Because the e-values never depend on the selection level,
sweeping that level upward can only grow the support (monotonicity), and
the adaptive loop can relax the target FDR until a minimum support size is
reached without invalidating the guarantee at the sweep ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from joblib import Parallel, delayed

from .errors import (
    BudgetError,
    ConfigurationError,
    ContractViolationError,
    EmptyDiscoveryError,
)
from .knockoff import (
    KnockoffRealisation,
    covariance_to_correlation,
    estimate_covariance,
    evalues,
    feature_statistic,
    knockoff_threshold,
    sample_knockoffs,
    solve_smatrix,
)
from .regress import (
    DEFAULT_RIDGE,
    ebic_value,
    fit_splicing,
    kfold_indices,
    library_ridge,
    screen_smax,
)


@dataclass
class SupportSet:
    """An ordered candidate-index set with the FDR level it was selected at."""

    indices: tuple[int, ...]
    target_fdr: float
    estimator: str | None = None
    score: float = math.nan

    def __post_init__(self):
        self.indices = tuple(int(i) for i in self.indices)

    def __len__(self):
        return len(self.indices)


@dataclass
class ScreenConfig:
    q0: float = 0.5
    q_max: float = 1.0
    dq: float = 0.01
    s_min: int = 2
    s_max: int | None = None  # None: derive via elastic-net screening
    K: int = 100
    seed: int = 0
    statistic: str = "shap_ds"
    smatrix: str = "equi"
    offset: int = 1
    estimators: tuple[str, ...] = ("graphical_lasso_cv", "ledoit_wolf")
    workers: int = 1


@dataclass
class ScreeningResult:
    support: SupportSet
    tuned_q: float
    s_max: int
    truncated: bool
    e_avg: list[np.ndarray]
    mean_statistic: list[np.ndarray]
    thresholds: np.ndarray  # (K, n_responses) for the winning estimator
    per_estimator: dict = field(default_factory=dict)

    def report(self, labels=None):
        sup = list(self.support.indices)
        return {
            "estimator": self.support.estimator,
            "tuned_q": self.tuned_q,
            "score": self.support.score,
            "s_max": self.s_max,
            "truncated": self.truncated,
            "support_indices": sup,
            "support_labels": [labels[j] for j in sup] if labels else None,
            "e_avg": [list(map(float, e)) for e in self.e_avg],
            "threshold_distribution": [
                [None if math.isinf(t) else float(t) for t in row]
                for row in self.thresholds.T.tolist()
            ],
            "per_estimator": self.per_estimator,
        }


def ebh_select(e_avg, q_ebh, s_max, tie_stats=None):
    """Size-constrained e-BH step-up selection on averaged e-values.

    Rejects the ``j*`` candidates with the largest e-values, where ``j*`` is
    the largest count ``j <= s_max`` satisfying ``e_(j) >= p / (q_ebh * j)``.
    No such count means an empty selection; truncating a larger rejection
    set to ``s_max`` would break e-BH self-consistency and is never done.
    Ties are broken by ``tie_stats`` (descending), then by index.
    """
    e_avg = np.asarray(e_avg, dtype=float)
    if np.any(e_avg < 0):
        raise ConfigurationError("e-values must be nonnegative")
    p = e_avg.size
    tie = np.zeros(p) if tie_stats is None else np.asarray(tie_stats, dtype=float)
    order = sorted(range(p), key=lambda j: (-e_avg[j], -tie[j], j))
    j_star = 0
    for j in range(1, min(s_max, p) + 1):
        if e_avg[order[j - 1]] >= p / (q_ebh * j):
            j_star = j
    return SupportSet(tuple(sorted(order[:j_star])), target_fdr=q_ebh)


def aggregate_evalues(realisations, q_base):
    """Average per-run e-values that share the fixed base level ``q_base``."""
    if not realisations:
        raise ConfigurationError("no realisations to aggregate")
    for r in realisations:
        if isinstance(r, KnockoffRealisation) and r.base_q != q_base:
            raise ContractViolationError(
                f"realisation built at base level {r.base_q}, expected {q_base}"
            )
    stack = np.stack(
        [r.evalues if isinstance(r, KnockoffRealisation) else np.asarray(r) for r in realisations]
    )
    return stack.mean(axis=0)


def bhq_select(pvalue_matrix, gamma, q):
    """Quantile-aggregated Benjamini-Hochberg selection.

    Per-candidate p-values across ``K`` runs are combined by the
    gamma-quantile rule ``min(1, quantile_gamma / gamma)`` (a single run
    passes through unchanged), then a BH step-up at level ``q`` is applied.
    """
    P = np.atleast_2d(np.asarray(pvalue_matrix, dtype=float))
    if np.any((P < 0) | (P > 1)):
        raise ConfigurationError("p-values must lie in [0, 1]")
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError("gamma must lie in (0, 1)")
    K, p = P.shape
    if K == 1:
        agg = P[0]
    else:
        agg = np.minimum(1.0, np.quantile(P, gamma, axis=0) / gamma)
    order = sorted(range(p), key=lambda j: (agg[j], j))
    j_star = 0
    for j in range(1, p + 1):
        if agg[order[j - 1]] <= q * j / p:
            j_star = j
    return SupportSet(tuple(sorted(order[:j_star])), target_fdr=q)


def truncate_support(library, responses, support, s_max, ridge_penalty=DEFAULT_RIDGE):
    """Exhaustively replace ``support`` by its best subset of size ``s_max``.

    Minimises the total ridge-refit RSS summed across responses. Returns
    the (possibly unchanged) support and a flag telling whether truncation
    happened.
    """
    support = tuple(sorted(int(j) for j in support))
    if len(support) <= s_max:
        return SupportSet(support, target_fdr=math.nan), False
    if math.comb(len(support), s_max) > 1_000_000:
        raise BudgetError("truncation enumeration exceeds the combinatorial budget")
    X = library.design if hasattr(library, "design") else np.asarray(library)
    n = X.shape[0]
    gram = X.T @ X
    best, best_rss = None, np.inf
    for subset in combinations(support, s_max):
        idx = np.asarray(subset)
        sub = gram[np.ix_(idx, idx)] + 2.0 * n * ridge_penalty * np.eye(s_max)
        total = 0.0
        for y in responses:
            xty = X[:, idx].T @ y
            try:
                b = np.linalg.solve(sub, xty)
            except np.linalg.LinAlgError:
                total = np.inf
                break
            total += float(y @ y) - 2.0 * b @ xty + b @ gram[np.ix_(idx, idx)] @ b
        if total < best_rss - 1e-15:
            best, best_rss = subset, total
    return SupportSet(best, target_fdr=math.nan), True


def make_realisation(X, y, cov, d, base_q, seed, s_max, statistic="shap_ds", offset=1):
    """Sample one knockoff copy and evaluate its statistics at ``base_q``."""
    Xt = sample_knockoffs(X, cov, d, seed)
    X_aug = np.hstack([X, Xt])
    # originals and their knockoff twins compete for slots on equal terms,
    # so the augmented fit gets twice the support budget
    fit = fit_splicing(
        X_aug,
        y,
        s_max=min(2 * s_max, X_aug.shape[1]),
        ridge_penalty=library_ridge(X.shape[0]),
        fold_seed=seed,
    )
    W = feature_statistic(X_aug, y, fit, statistic)
    tau, _ = knockoff_threshold(W, base_q, offset=offset)
    e = evalues(W, tau, X.shape[1])
    return KnockoffRealisation(
        knockoff_design=Xt,
        s_diag=np.asarray(d, dtype=float),
        statistic=W,
        threshold=tau,
        evalues=e,
        seed=seed,
        base_q=base_q,
    )


def _cv_ebic(X_s, responses, pool, seed):
    """3-fold cross-validated EBIC of the OLS refit, summed over responses."""
    n, s = X_s.shape
    total = 0.0
    for y in responses:
        scores = []
        for train, test in kfold_indices(n, 3, seed):
            coef, *_ = np.linalg.lstsq(X_s[train], y[train], rcond=None)
            resid = y[test] - X_s[test] @ coef
            sigma2 = max(float(np.mean(resid**2)), 1e-300)
            scores.append(ebic_value(test.size, sigma2, s, pool))
        total += float(np.mean(scores))
    return total


def _statistics_for_estimator(X, responses, estimator, config, seeds, s_max, workers):
    cov = estimate_covariance(X, estimator)
    corr, sd = covariance_to_correlation(cov.sigma)
    d = solve_smatrix(corr, config.smatrix) * sd**2

    lam = library_ridge(X.shape[0])
    fit_budget = min(2 * s_max, 2 * X.shape[1])

    def one(seed, y):
        Xt = sample_knockoffs(X, cov, d, seed)
        X_aug = np.hstack([X, Xt])
        fit = fit_splicing(X_aug, y, s_max=fit_budget, ridge_penalty=lam, fold_seed=seed)
        W = feature_statistic(X_aug, y, fit, config.statistic)
        tau, _ = knockoff_threshold(W, config.q0, offset=config.offset)
        return W, tau, evalues(W, tau, X.shape[1])

    jobs = [(int(seed), r) for seed in seeds for r in range(len(responses))]
    if workers > 1:
        results = Parallel(n_jobs=workers)(
            delayed(one)(seed, responses[r]) for seed, r in jobs
        )
    else:
        results = [one(seed, responses[r]) for seed, r in jobs]

    n_resp = len(responses)
    K = len(seeds)
    e_avg = [np.zeros(X.shape[1]) for _ in range(n_resp)]
    w_avg = [np.zeros(X.shape[1]) for _ in range(n_resp)]
    taus = np.empty((K, n_resp))
    for idx, (W, tau, e) in enumerate(results):
        k, r = divmod(idx, n_resp)
        e_avg[r] += e / K
        w_avg[r] += W / K
        taus[k, r] = tau
    return e_avg, w_avg, taus


def adaptive_filter(library, config=None, **overrides):
    """Multi-knockoff screening with covariance selection and adaptive FDR.

    For each covariance estimator, ``K`` shared-seed knockoff realisations
    produce decoupled e-values at the base level ``q0``; the selection level
    is then relaxed in ``dq`` steps until the union of per-response supports
    reaches ``s_min`` (or ``q_max`` is exhausted). Supports larger than
    ``s_max`` are reduced by exhaustive best-subset truncation. The
    estimator whose OLS refit attains the lower cross-validated EBIC wins.

    Returns a :class:`ScreeningResult`; raises
    :class:`~pdesieve.errors.EmptyDiscoveryError` when no estimator reaches
    ``s_min``.
    """
    if config is None:
        config = ScreenConfig(**overrides)
    elif overrides:
        raise ConfigurationError("pass either a config object or keyword overrides")
    X = library.design
    responses = library.responses
    p = X.shape[1]
    if not 0 < config.q0 <= config.q_max <= 1.0:
        raise ConfigurationError("need 0 < q0 <= q_max <= 1")
    if config.s_min < 1 or config.K < 1:
        raise ConfigurationError("s_min and K must be >= 1")

    s_max = config.s_max
    if s_max is None:
        s_max = max(
            screen_smax(X, y, fold_seed=config.seed + r) for r, y in enumerate(responses)
        )
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(config.K)]

    best = None
    diagnostics = {}
    for estimator in config.estimators:
        e_avg, w_avg, taus = _statistics_for_estimator(
            X, responses, estimator, config, seeds, s_max, config.workers
        )
        q = config.q0
        chosen = None
        while q <= config.q_max + 1e-12:
            union = set()
            for r in range(len(responses)):
                union |= set(ebh_select(e_avg[r], q, s_max, w_avg[r]).indices)
            if len(union) >= config.s_min:
                chosen = tuple(sorted(union))
                break
            q = round(q + config.dq, 12)
        diagnostics[estimator] = {
            "tuned_q": None if chosen is None else q,
            "support_size": None if chosen is None else len(chosen),
        }
        if chosen is None:
            continue
        truncated = False
        if len(chosen) > s_max:
            sup, truncated = truncate_support(
                library, responses, chosen, s_max, ridge_penalty=library_ridge(X.shape[0])
            )
            chosen = sup.indices
        score = _cv_ebic(X[:, list(chosen)], responses, p, config.seed)
        diagnostics[estimator]["score"] = score
        if best is None or score < best["score"]:
            best = {
                "estimator": estimator,
                "support": chosen,
                "q": q,
                "score": score,
                "e_avg": e_avg,
                "w_avg": w_avg,
                "taus": taus,
                "truncated": truncated,
            }

    if best is None:
        raise EmptyDiscoveryError(
            f"no estimator reached s_min={config.s_min} below q_max={config.q_max}"
        )
    support = SupportSet(
        best["support"],
        target_fdr=best["q"],
        estimator=best["estimator"],
        score=best["score"],
    )
    return ScreeningResult(
        support=support,
        tuned_q=best["q"],
        s_max=s_max,
        truncated=best["truncated"],
        e_avg=best["e_avg"],
        mean_statistic=best["w_avg"],
        thresholds=best["taus"],
        per_estimator=diagnostics,
    )
