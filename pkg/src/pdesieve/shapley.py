"""Closed-form Shapley attributions for linear models.

With independent-feature (interventional) marginals, the Shapley value of
feature ``j`` for sample ``i`` under a linear predictor ``x -> x @ coef``
collapses to ``coef_j * (X_ij - mean(X_:,j))``: the marginal contribution of
``j`` is the same for every coalition, so the coalition-weighted average is
that single value.
"""

import numpy as np


def linear_shap_values(X, coef):
    """Per-sample, per-feature Shapley values of a linear model."""
    X = np.asarray(X, dtype=float)
    coef = np.asarray(coef, dtype=float)
    return coef[None, :] * (X - X.mean(axis=0, keepdims=True))


def mean_abs_shap(X, coef):
    """Mean absolute Shapley value per feature (the importance score Z)."""
    return np.mean(np.abs(linear_shap_values(X, coef)), axis=0)
