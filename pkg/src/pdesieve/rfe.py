"""SHAP-guided recursive feature elimination with knockoff perturbation tests.

Two stages refine an FDR-controlled support. First, terms are ranked by
mean absolute Shapley attribution and the nested-subset curve of
cross-validated R^2 is cut by the one-standard-deviation rule. Second,
terms below the knee of the EBIC curve are challenged from least to most
important: each has its column replaced by a knockoff copy ``K`` times, and
a one-sided Wilcoxon signed-rank test asks whether the swapped system fits
significantly better. A rejection (for at least one covariance estimator)
removes the term and restarts the scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigurationError, DegenerateSampleError
from .knockoff import (
    covariance_to_correlation,
    estimate_covariance,
    sample_knockoffs,
    solve_smatrix,
)
from .regress import (
    DEFAULT_RIDGE,
    ebic_value,
    fit_linear,
    kfold_indices,
    library_ridge,
    ridge_loss,
)
from .screen import SupportSet
from .shapley import mean_abs_shap


@dataclass
class PerturbationTest:
    """Knockoff-substitution test record for one vulnerable term."""

    term_index: int
    baseline_loss: float
    swapped_losses: np.ndarray
    p_value: float


@dataclass
class RfeResult:
    support: SupportSet
    trace: list = field(default_factory=list)


def shap_rank(X_s, y):
    """Column order of decreasing mean absolute Shapley value (OLS fit)."""
    X_s = np.asarray(X_s, dtype=float)
    if X_s.ndim == 1:
        X_s = X_s[:, None]
    coef = fit_linear(X_s, y)
    z = mean_abs_shap(X_s, coef)
    return sorted(range(X_s.shape[1]), key=lambda j: (-z[j], j))


def one_sd_select(means, sds):
    """Smallest nested subset within one sd of the peak CV score (1-based)."""
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    best = int(np.argmax(means))
    threshold = means[best] - sds[best]
    for k, m in enumerate(means):
        if m >= threshold:
            return k + 1
    return means.size


def find_knee(scores):
    """Chord-gap knee of a score-versus-size curve (1-based index).

    Returns 1 when the curve carries no concave bend (flat, linear or
    convex), so that only the leading term is protected.
    """
    scores = np.asarray(scores, dtype=float)
    m = scores.size
    if m < 2:
        raise ConfigurationError("knee detection needs at least two scores")
    lo, hi = float(scores.min()), float(scores.max())
    if hi - lo < 1e-300:
        return 1
    x = np.linspace(0.0, 1.0, m)
    ynorm = (scores - lo) / (hi - lo)
    chord = ynorm[0] + (ynorm[-1] - ynorm[0]) * x
    gap = chord - ynorm
    if float(gap.max()) <= 1e-12:
        return 1
    return int(np.argmax(gap)) + 1


def _exact_signed_rank_tail(ranks2, w2):
    """P(W+ <= w2/2) for doubled integer ranks under random signs."""
    total = int(np.sum(ranks2))
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    return float(np.sum(counts[: w2 + 1]) / 2.0 ** len(ranks2))


def wilcoxon_one_sided(diffs, exact_limit=25):
    """One-sided Wilcoxon signed-rank p-value for the alternative ``diffs < 0``.

    Zeros are dropped; midranks handle ties. Exact tail enumeration is used
    up to ``exact_limit`` observations, a tie-corrected normal approximation
    with continuity correction beyond that.
    """
    diffs = np.asarray(diffs, dtype=float)
    if diffs.size < 5:
        raise ConfigurationError("need at least 5 paired differences")
    diffs = diffs[diffs != 0.0]
    if diffs.size == 0:
        raise DegenerateSampleError("all paired differences are zero")
    n = diffs.size
    ranks = rankdata(np.abs(diffs))
    w_plus = float(np.sum(ranks[diffs > 0]))
    if n <= exact_limit:
        ranks2 = np.rint(2.0 * ranks).astype(int)
        w2 = int(round(2.0 * w_plus))
        return _exact_signed_rank_tail(ranks2, w2)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        raise DegenerateSampleError("degenerate rank variance")
    z = (w_plus - mean + 0.5) / math.sqrt(var)
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def perturb_test(X_s, y, j, K, cov_method, ridge_penalty=DEFAULT_RIDGE, seed=0):
    """Swap column ``j`` for knockoff copies and test for an improved fit.

    The covariance is fitted on the current support columns only; knockoffs
    use the equicorrelated decoupling diagonal. Small p-values mean the
    knockoff does at least as well as the original, evidence the term is
    dispensable.
    """
    X_s = np.asarray(X_s, dtype=float)
    y = np.asarray(y, dtype=float)
    coef = fit_linear(X_s, y, ridge_penalty)
    baseline = ridge_loss(X_s, y, coef, ridge_penalty)
    cov = estimate_covariance(X_s, cov_method)
    corr, sd = covariance_to_correlation(cov.sigma)
    d = solve_smatrix(corr, "equi") * sd**2
    seeds = np.random.SeedSequence(seed).spawn(K)
    losses = np.empty(K)
    for k in range(K):
        kid = int(seeds[k].generate_state(1)[0])
        Xt = sample_knockoffs(X_s, cov, d, kid)
        swapped = X_s.copy()
        swapped[:, j] = Xt[:, j]
        coef_k = fit_linear(swapped, y, ridge_penalty)
        losses[k] = ridge_loss(swapped, y, coef_k, ridge_penalty)
    p_value = wilcoxon_one_sided(losses - baseline)
    return PerturbationTest(j, baseline, losses, p_value)


def _cv_r2(X_s, y, seed):
    scores = []
    for train, test in kfold_indices(X_s.shape[0], 3, seed):
        coef, *_ = np.linalg.lstsq(X_s[train], y[train], rcond=None)
        resid = y[test] - X_s[test] @ coef
        denom = float(np.sum((y[test] - y[test].mean()) ** 2))
        scores.append(1.0 - float(resid @ resid) / max(denom, 1e-300))
    return float(np.mean(scores)), float(np.std(scores, ddof=1))


def rfe(
    library,
    y=None,
    support=None,
    response=0,
    alpha=0.10,
    K=100,
    cov_methods=("graphical_lasso_cv", "ledoit_wolf"),
    ridge_penalty=None,
    seed=0,
):
    """Refine a screened support set; returns indices in library order.

    ``library`` may be a :class:`~pdesieve.weaklib.CandidateLibrary` (then
    ``y`` defaults to its ``response``-th response) or a plain design
    matrix with an explicit response vector. ``support`` indexes the
    columns under scrutiny, all of them by default. Worst case the input
    support is returned unchanged.
    """
    if hasattr(library, "design"):
        X = library.design
        if y is None:
            y = library.responses[response]
    else:
        X = np.asarray(library, dtype=float)
        if y is None:
            raise ConfigurationError("a raw design matrix needs a response vector")
        y = np.asarray(y, dtype=float)
    support = list(range(X.shape[1])) if support is None else [int(j) for j in support]
    if not support:
        raise ConfigurationError("empty support")
    if ridge_penalty is None:
        ridge_penalty = library_ridge(X.shape[0])
    seed_seq = np.random.SeedSequence(seed)
    trace = []

    # Subprocedure 1: SHAP ranking, nested subsets, one-sd truncation
    X_s = X[:, support]
    order = shap_rank(X_s, y)
    ranked = [support[i] for i in order]
    means, sds = [], []
    for k in range(1, len(ranked) + 1):
        m, s = _cv_r2(X[:, ranked[:k]], y, seed)
        means.append(m)
        sds.append(s)
    keep = one_sd_select(means, sds)
    current = ranked[:keep]
    trace.append(
        {
            "stage": "shap_selection",
            "ranked": list(ranked),
            "cv_r2_mean": means,
            "cv_r2_sd": sds,
            "kept": list(current),
        }
    )

    # Subprocedure 2: knee-protected knockoff perturbation testing
    n = X.shape[0]
    while len(current) > 1:
        ebics = []
        for k in range(1, len(current) + 1):
            coef, *_ = np.linalg.lstsq(X[:, current[:k]], y, rcond=None)
            resid = y - X[:, current[:k]] @ coef
            sigma2 = max(float(resid @ resid) / n, 1e-300)
            ebics.append(ebic_value(n, sigma2, k, len(current)))
        knee = find_knee(ebics)
        eliminated = False
        for pos in range(len(current) - 1, knee - 1, -1):
            pvals = {}
            for cov_method in cov_methods:
                child = int(seed_seq.spawn(1)[0].generate_state(1)[0])
                test = perturb_test(
                    X[:, current], y, pos, K, cov_method, ridge_penalty, seed=child
                )
                pvals[cov_method] = test.p_value
            removed = min(pvals.values()) < alpha
            trace.append(
                {
                    "stage": "perturbation",
                    "term": current[pos],
                    "knee": knee,
                    "p_values": dict(pvals),
                    "removed": removed,
                }
            )
            if removed:
                del current[pos]
                eliminated = True
                break
        if not eliminated:
            break

    return RfeResult(SupportSet(tuple(sorted(current)), target_fdr=alpha), trace)
