"""Best-subset PDE alternatives ranked by multi-criteria consensus.

Every support size up to the refined-support cardinality contributes one
RSS-optimal alternative. Each alternative is scored on six minimised
criteria: relative pinball loss of conformalised quantile forecasts,
structural complexity, an information-complexity score with a robust
residual scale, RIF coefficient uncertainty, Murphy-Ehm miscalibration and
the coverage-width criterion. Five MCDM methods rank the alternatives and
five consensus rules plus a Borda vote pick the winner, recursively
re-ranking after each removal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (
    ConfigurationError,
    DegenerateSampleError,
    NumericalError,
)
from .mcdm import (
    MCDM_METHODS,
    aggregate_ranks,
    mcdm_preferences,
    mean_preference_winner,
    ordering_from_scores,
)
from .regress import (
    DEFAULT_RIDGE,
    aic_value,
    ebic_value,
    exhaustive_best_subset,
    fit_linear,
    fit_quantile,
    fit_rif,
    kfold_indices,
    pinball_loss,
)

CRITERIA = (
    "pinball",
    "structural_complexity",
    "ricomp",
    "pde_uncertainty",
    "miscalibration",
    "cwc",
)
_LOG_SCALED = {"pinball", "ricomp", "pde_uncertainty", "miscalibration", "cwc"}
QUANTILES = (0.05, 0.5, 0.95)


@dataclass
class Alternative:
    """The RSS-best subset of one size, with its ridge-refit coefficients."""

    support: tuple[int, ...]
    size: int
    refit_coefficients: np.ndarray
    rss: float


@dataclass
class IntervalBundle:
    """Pooled out-of-fold quantile predictions with conformal adjustments."""

    y: np.ndarray                 # held-out actuals, pooled
    predictions: np.ndarray       # (n_pooled, 3) at the 5/50/95 quantiles
    null_quantiles: np.ndarray    # (n_pooled, 3) per-fold training quantiles
    repeat_ids: np.ndarray
    fold_ids: np.ndarray
    adjustments: list[float]
    picp: float
    nmpil: float
    miscoverage: float


@dataclass
class DecisionMatrix:
    """Alternatives x criteria, raw and normalised, with variance weights."""

    alternatives: list[Alternative]
    criteria: tuple[str, ...]
    raw: np.ndarray
    transformed: np.ndarray
    weights: np.ndarray
    minimize: np.ndarray
    sizes: np.ndarray


@dataclass
class SelectionResult:
    ordering: list[int]               # positions into the decision matrix rows
    winner: Alternative
    preferences: dict                 # first-pass scores per MCDM method
    rank1_wins: np.ndarray
    composite_borda: np.ndarray
    mean_preference_pick: int


@dataclass
class SelectConfig:
    n_keep: int = 5
    miscoverage: float = 0.1
    folds: int = 3
    repeats: int = 10
    seed: int = 0
    ridge: float = DEFAULT_RIDGE
    quantile_l2: float = DEFAULT_RIDGE


def enumerate_alternatives(X, y, ridge_penalty=DEFAULT_RIDGE):
    """One RSS-best alternative per support size 1..p.

    Best subsets are not nested: the best size-(k+1) subset need not
    contain the best size-k one.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    if p > 20:
        raise ConfigurationError("alternative enumeration supports at most 20 terms")
    out = []
    for k in range(1, p + 1):
        fit = exhaustive_best_subset(X, y, k, ridge_penalty)
        out.append(
            Alternative(
                support=fit.support,
                size=k,
                refit_coefficients=fit.coefficients[list(fit.support)],
                rss=float(fit.cv_score),
            )
        )
    return out


def cv_splits(n, folds, repeats, seed):
    """Shared deterministic repeated k-fold splits keyed by one seed."""
    out = []
    for r in range(repeats):
        for f, (train, test) in enumerate(kfold_indices(n, folds, seed * 7919 + r)):
            out.append((r, f, train, test))
    return out


def conformal_intervals(
    X, y, miscoverage=0.1, folds=3, repeats=10, seed=0, quantile_l2=DEFAULT_RIDGE,
    ridge=DEFAULT_RIDGE,
):
    """Split-CQR prediction intervals under repeated cross-validation.

    Per fold, quantile regressions at the interval endpoints and a ridge
    fit at the median are trained on half the training fold; the other half
    calibrates the CQR score ``max(lower - y, y - upper)`` whose
    ``ceil((1 - alpha)(m + 1))``-th order statistic widens the interval.
    Predictions are sorted per point so lower <= median <= upper.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 30:
        raise ConfigurationError("conformal evaluation needs at least 30 rows")
    if not 0.0 < miscoverage < 1.0:
        raise ConfigurationError("miscoverage must lie strictly inside (0, 1)")
    lo_tau, hi_tau = miscoverage / 2.0, 1.0 - miscoverage / 2.0

    ys, preds, nulls, reps, folds_out, adjustments = [], [], [], [], [], []
    rng = np.random.default_rng(seed + 1)
    for r, f, train, test in cv_splits(n, folds, repeats, seed):
        perm = rng.permutation(train.size)
        half = train.size // 2
        proper, calib = train[perm[:half]], train[perm[half:]]
        m = calib.size
        k = math.ceil((1.0 - miscoverage) * (m + 1))
        if m < 2 or k > m:
            raise ConfigurationError(
                f"calibration split of {m} points cannot supply the "
                f"{k}-th order statistic"
            )
        beta_lo = fit_quantile(X[proper], y[proper], lo_tau, quantile_l2)
        beta_hi = fit_quantile(X[proper], y[proper], hi_tau, quantile_l2)
        beta_med = fit_linear(X[proper], y[proper], ridge)
        scores = np.maximum(
            X[calib] @ beta_lo - y[calib], y[calib] - X[calib] @ beta_hi
        )
        adj = float(np.sort(scores)[k - 1])
        trio = np.column_stack(
            [
                X[test] @ beta_lo - adj,
                X[test] @ beta_med,
                X[test] @ beta_hi + adj,
            ]
        )
        trio.sort(axis=1)
        ys.append(y[test])
        preds.append(trio)
        nulls.append(
            np.tile(np.quantile(y[train], QUANTILES), (test.size, 1))
        )
        reps.append(np.full(test.size, r))
        folds_out.append(np.full(test.size, f))
        adjustments.append(adj)

    y_all = np.concatenate(ys)
    pred_all = np.vstack(preds)
    covered = (y_all >= pred_all[:, 0]) & (y_all <= pred_all[:, 2])
    picp = float(np.mean(covered))
    nmpil = float(np.mean(pred_all[:, 2] - pred_all[:, 0])) / max(
        float(np.ptp(y)), 1e-300
    )
    return IntervalBundle(
        y=y_all,
        predictions=pred_all,
        null_quantiles=np.vstack(nulls),
        repeat_ids=np.concatenate(reps),
        fold_ids=np.concatenate(folds_out),
        adjustments=adjustments,
        picp=picp,
        nmpil=nmpil,
        miscoverage=miscoverage,
    )


def criterion_pinball(bundle):
    """Mean over quantiles of forecast pinball relative to the null forecast."""
    ratios = []
    for i, tau in enumerate(QUANTILES):
        model = pinball_loss(bundle.y - bundle.predictions[:, i], tau)
        null = pinball_loss(bundle.y - bundle.null_quantiles[:, i], tau)
        if null <= 0:
            raise DegenerateSampleError("constant response: null pinball vanishes")
        ratios.append(model / null)
    return float(np.mean(ratios))


def criterion_ricomp(X_s, y, ridge_penalty=DEFAULT_RIDGE):
    """Information complexity with a MAD residual scale.

    ``n log sigma^2 + 2 C1`` where ``C1`` compares the trace and
    determinant of the coefficient covariance; ill-conditioned designs
    inflate it, orthonormal ones zero it.
    """
    X_s = np.asarray(X_s, dtype=float)
    y = np.asarray(y, dtype=float)
    n, s = X_s.shape
    coef = fit_linear(X_s, y, ridge_penalty)
    resid = y - X_s @ coef
    mad = float(np.median(np.abs(resid - np.median(resid))))
    sigma = max(1.4826 * mad, 1e-150)
    cov = sigma**2 * np.linalg.inv(X_s.T @ X_s + ridge_penalty * np.eye(s))
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        raise NumericalError("coefficient covariance is numerically singular")
    c1 = 0.5 * s * math.log(np.trace(cov) / s) - 0.5 * logdet
    return float(n * math.log(sigma**2) + 2.0 * c1)


def criterion_uncertainty(X_train, y_train):
    """RIF coefficient dispersion: l1 norm of SEs over l1 norm of estimates."""
    coef, se = fit_rif(X_train, y_train, 0.5)
    denom = float(np.sum(np.abs(coef)))
    if denom <= 0:
        raise DegenerateSampleError("all RIF coefficients are zero")
    return float(np.sum(np.abs(se))) / denom


def _isotonic_quantile(order_values, y, tau):
    """PAVA isotonic fit of y against order_values under pinball loss."""
    order = np.argsort(order_values, kind="stable")
    blocks = []  # (value, ys list), non-decreasing values
    i = 0
    ordered_vals = order_values[order]
    ordered_y = y[order]
    n = y.size
    while i < n:
        j = i
        while j + 1 < n and ordered_vals[j + 1] == ordered_vals[i]:
            j += 1
        members = list(ordered_y[i : j + 1])
        value = float(np.quantile(members, tau, method="inverted_cdf"))
        while blocks and blocks[-1][0] > value:
            prev_value, prev_members = blocks.pop()
            members = prev_members + members
            value = float(np.quantile(members, tau, method="inverted_cdf"))
        blocks.append((value, members))
        i = j + 1
    fitted_sorted = np.concatenate(
        [np.full(len(members), value) for value, members in blocks]
    )
    fitted = np.empty(n)
    fitted[order] = fitted_sorted
    return fitted


def murphy_ehm(predictions, y, tau):
    """Miscalibration / discrimination / uncertainty split of the pinball score.

    ``S_raw = MCB - DSC + UNC`` holds exactly by construction, with
    ``MCB >= 0`` and ``DSC >= 0`` because the isotonic recalibration can
    reproduce both the raw forecast and the constant null forecast.
    """
    predictions = np.asarray(predictions, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size < 10:
        raise DegenerateSampleError("Murphy decomposition needs at least 10 points")
    q_null = float(np.quantile(y, tau, method="inverted_cdf"))
    unc = pinball_loss(y - q_null, tau)
    s_raw = pinball_loss(y - predictions, tau)
    recal = _isotonic_quantile(predictions, y, tau)
    s_recal = pinball_loss(y - recal, tau)
    mcb = s_raw - s_recal
    dsc = unc - s_recal
    return float(mcb), float(dsc), float(unc)


def cwc(picp, nmpil, mu=0.85, eta=200.0):
    """Coverage-width criterion: interval length over a coverage sigmoid."""
    if not 0.0 <= picp <= 1.0 or nmpil < 0:
        raise ConfigurationError("picp must lie in [0,1] and nmpil be >= 0")
    return float(nmpil / expit(eta * (picp - mu)))


def _normalise_columns(raw, criteria):
    # heavy-tailed criteria are log-compressed; columns reaching zero or
    # below are first shifted so their range spans exactly one decade
    # (a "relative minimum-shift" that cannot manufacture outliers)
    transformed = np.empty_like(raw)
    for j, name in enumerate(criteria):
        col = raw[:, j]
        lo = col.min()
        span = col.max() - lo
        if name not in _LOG_SCALED or span <= 0:
            transformed[:, j] = col
        elif lo > 0:
            transformed[:, j] = np.log10(col)
        else:
            transformed[:, j] = np.log10(col - lo + span / 9.0)
    return transformed


def _variance_weights(transformed):
    lo = transformed.min(axis=0)
    span = transformed.max(axis=0) - lo
    unit = np.zeros_like(transformed)
    mask = span > 0
    unit[:, mask] = (transformed[:, mask] - lo[mask]) / span[mask]
    var = unit.var(axis=0)
    total = var.sum()
    if total <= 0:
        return np.full(transformed.shape[1], 1.0 / transformed.shape[1])
    return var / total


def build_decision_matrix(alternatives, X, y, term_complexities, config=None):
    """Evaluate the six criteria per alternative and assemble the matrix.

    Alternatives are first thinned to the ``n_keep`` best by EBIC. All
    alternatives share fold seeds so criterion differences reflect the
    models. Heavy-tailed criteria are shifted positive and log-scaled;
    weights are proportional to the variance of the min-max-normalised
    columns.
    """
    if config is None:
        config = SelectConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, pool = X.shape
    if len(alternatives) < 2:
        raise ConfigurationError("need at least two alternatives to rank")

    ranked = sorted(
        alternatives,
        key=lambda a: (ebic_value(n, max(a.rss / n, 1e-300), a.size, pool), a.size),
    )
    kept = ranked[: config.n_keep]
    kept.sort(key=lambda a: a.size)

    splits = cv_splits(n, config.folds, config.repeats, config.seed)
    raw = np.empty((len(kept), len(CRITERIA)))
    for i, alt in enumerate(kept):
        cols = list(alt.support)
        X_s = X[:, cols]
        bundle = conformal_intervals(
            X_s,
            y,
            miscoverage=config.miscoverage,
            folds=config.folds,
            repeats=config.repeats,
            seed=config.seed,
            quantile_l2=config.quantile_l2,
            ridge=config.ridge,
        )
        mcbs = [
            murphy_ehm(bundle.predictions[:, t], bundle.y, tau)[0]
            for t, tau in enumerate(QUANTILES)
        ]
        unc_vals = [
            criterion_uncertainty(X_s[train], y[train]) for _, _, train, _ in splits
        ]
        values = {
            "pinball": criterion_pinball(bundle),
            "structural_complexity": float(
                sum(term_complexities[j] for j in cols)
            ),
            "ricomp": criterion_ricomp(X_s, y, config.ridge),
            "pde_uncertainty": float(np.mean(unc_vals)),
            "miscalibration": float(np.mean(mcbs)),
            "cwc": cwc(bundle.picp, bundle.nmpil),
        }
        for j, name in enumerate(CRITERIA):
            v = values[name]
            if not np.isfinite(v):
                raise NumericalError(
                    f"criterion {name} is not finite for the size-{alt.size} alternative"
                )
            raw[i, j] = v

    transformed = _normalise_columns(raw, CRITERIA)
    weights = _variance_weights(transformed)
    return DecisionMatrix(
        alternatives=kept,
        criteria=CRITERIA,
        raw=raw,
        transformed=transformed,
        weights=weights,
        minimize=np.ones(len(CRITERIA), dtype=bool),
        sizes=np.array([a.size for a in kept]),
    )


def mcdm_select(matrix):
    """Recursive consensus ranking; the first winner is the chosen equation.

    Each round runs the five MCDM methods on the active rows of the
    normalised matrix, fuses their rankings, removes the lexicographic
    winner and repeats. The first round also records per-method preference
    scores and the mean-normalised-preference pick for cross-checking.
    """
    m = len(matrix.alternatives)
    active = list(range(m))
    ordering = []
    first_preferences = None
    first_aggregate = None
    while active:
        if len(active) == 1:
            ordering.append(active[0])
            break
        sub = matrix.transformed[active]
        scores_by_method = {}
        method_orderings = []
        for method in MCDM_METHODS:
            scores, higher = mcdm_preferences(sub, method, matrix.weights, True)
            scores_by_method[method] = (scores, higher)
            method_orderings.append(ordering_from_scores(scores, higher))
        agg = aggregate_ranks(
            method_orderings, sizes=[matrix.sizes[a] for a in active]
        )
        if first_preferences is None:
            first_preferences = {
                method: (np.asarray(s), h) for method, (s, h) in scores_by_method.items()
            }
            first_aggregate = agg
        winner_local = agg["ordering"][0]
        winner = active[winner_local]
        ordering.append(winner)
        active.remove(winner)

    if first_preferences is None:  # single alternative: trivially the winner
        first_preferences = {}
        mean_pick = 0
        rank1 = np.zeros(1)
        composite = np.zeros(1)
    else:
        mean_pick = mean_preference_winner(
            first_preferences, sizes=matrix.sizes.tolist()
        )
        rank1 = first_aggregate["rank1_wins"]
        composite = first_aggregate["composite_borda"]
    return SelectionResult(
        ordering=ordering,
        winner=matrix.alternatives[ordering[0]],
        preferences=first_preferences,
        rank1_wins=rank1,
        composite_borda=composite,
        mean_preference_pick=int(mean_pick),
    )


def ic_select(alternatives, X, y, gamma=1.0):
    """AIC and EBIC minimisers over the alternatives (Gaussian ML variance)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, pool = X.shape
    aics, ebics = [], []
    for alt in alternatives:
        cols = list(alt.support)
        coef, *_ = np.linalg.lstsq(X[:, cols], y, rcond=None)
        resid = y - X[:, cols] @ coef
        sigma2 = max(float(resid @ resid) / n, 1e-300)
        aics.append(aic_value(n, sigma2, alt.size))
        ebics.append(ebic_value(n, sigma2, alt.size, pool, gamma))
    return {
        "aic": alternatives[int(np.argmin(aics))],
        "ebic": alternatives[int(np.argmin(ebics))],
        "aic_scores": aics,
        "ebic_scores": ebics,
    }
