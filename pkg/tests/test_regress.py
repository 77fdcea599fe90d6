import itertools
import math

import numpy as np
import pytest

from pdesieve.errors import BudgetError, ConfigurationError, SingularityError
from pdesieve.regress import (
    elastic_net_kkt_violation,
    exhaustive_best_subset,
    fit_elastic_net,
    fit_linear,
    fit_quantile,
    fit_rif,
    fit_splicing,
    pinball_loss,
    screen_smax,
    splice_at_size,
    _smoothed_pinball_and_grad,
)
from pdesieve.shapley import linear_shap_values, mean_abs_shap


class TestFitLinear:
    def test_identity_design(self):
        beta = fit_linear(np.eye(3), np.array([1.0, 2.0, 3.0]))
        assert np.allclose(beta, [1, 2, 3])

    def test_intercept_column(self):
        beta = fit_linear(np.ones((4, 1)), np.ones(4))
        assert np.allclose(beta, [1.0])

    def test_one_dim_ridge_closed_form(self):
        X = np.array([[1.0], [2.0]])
        y = np.array([1.0, 2.0])
        lam = 0.3
        beta = fit_linear(X, y, ridge_penalty=lam)
        # stationarity of (1/2n)||y - x b||^2 + lam b^2:
        # b = sum(xy) / (sum(x^2) + 2 n lam)
        expected = 5.0 / (5.0 + 2 * 2 * lam)
        assert abs(beta[0] - expected) < 1e-12

    def test_rank_deficiency_raises(self):
        X = np.column_stack([np.ones(5), np.ones(5)])
        with pytest.raises(SingularityError):
            fit_linear(X, np.arange(5.0))

    def test_scale_equivariance(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 6))
        y = rng.normal(size=40)
        for lam in (0.0, 1e-3):
            b1 = fit_linear(X, y, lam)
            b2 = fit_linear(X, 3.5 * y, lam)
            assert np.allclose(b2, 3.5 * b1, rtol=1e-10)


class TestElasticNet:
    def test_large_lambda_kills_everything(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 8))
        y = rng.normal(size=50)
        lam_max = np.max(np.abs(X.T @ y)) / (50 * 0.5)
        beta = fit_elastic_net(X, y, 1.01 * lam_max, 0.5)
        assert np.all(beta == 0.0)

    def test_lambda_zero_matches_ols(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 5))
        y = X @ np.array([1.0, -2.0, 0.0, 0.5, 3.0]) + 0.1 * rng.normal(size=60)
        en = fit_elastic_net(X, y, 0.0, 0.5)
        ols = fit_linear(X, y)
        assert np.max(np.abs(en - ols)) < 1e-6

    def test_orthonormal_soft_threshold(self):
        # columns with X'X = n I, alpha = 1: beta_j = soft(X_j'y/n, lam)
        rng = np.random.default_rng(3)
        n, p = 64, 4
        q, _ = np.linalg.qr(rng.normal(size=(n, p)))
        X = q * math.sqrt(n)
        y = rng.normal(size=n)
        lam = 0.05
        beta = fit_elastic_net(X, y, lam, 1.0)
        rho = X.T @ y / n
        expected = np.sign(rho) * np.maximum(np.abs(rho) - lam, 0.0)
        assert np.max(np.abs(beta - expected)) < 1e-8

    def test_kkt_residual(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(100, 12))
        X /= np.linalg.norm(X, axis=0) / math.sqrt(100)
        y = X[:, 0] * 2 - X[:, 3] + 0.5 * rng.normal(size=100)
        for lam, ratio in [(0.1, 0.5), (0.02, 1.0), (0.05, 0.25)]:
            beta = fit_elastic_net(X, y, lam, ratio)
            assert elastic_net_kkt_violation(X, y, beta, lam, ratio) < 1e-6


def unit_columns(X):
    # screen_smax expects standardised (unit-norm) columns, as in the library
    return X / np.linalg.norm(X, axis=0)


class TestScreenSmax:
    def test_planted_support_found(self):
        rng = np.random.default_rng(5)
        X = unit_columns(rng.normal(size=(400, 30)))
        truth = [2, 7, 19]
        y = X[:, truth] @ np.array([3.0, -2.5, 2.0]) + 0.001 * rng.normal(size=400)
        s = screen_smax(X, y)
        assert 3 <= s <= 20

    def test_pure_noise_small(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            X = unit_columns(rng.normal(size=(500, 50)))
            y = rng.normal(size=500)
            if screen_smax(X, y, fold_seed=seed) <= 5:
                hits += 1
        assert hits >= 18  # >= 90%

    def test_single_kappa_grid(self):
        rng = np.random.default_rng(6)
        X = unit_columns(rng.normal(size=(200, 10)))
        y = X[:, 0] + 0.05 * rng.normal(size=200)
        s = screen_smax(X, y, kappas=(1.0,))
        assert 2 <= s <= 20


class TestSplicing:
    def test_planted_recovery_rate(self):
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(500, 50))
            truth = (4, 17, 33)
            beta = np.zeros(50)
            beta[list(truth)] = [2.0, -1.5, 1.0]
            signal = X @ beta
            noise_sd = float(np.std(signal)) / math.sqrt(10.0)  # SNR 10 in variance
            y = signal + noise_sd * rng.normal(size=500)
            fit = splice_at_size(X, y, 3)
            hits += fit.support == truth
        assert hits >= 95

    def test_size_one_is_best_column(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(200, 8))
        y = 2.0 * X[:, 5] + 0.01 * rng.normal(size=200)
        fit = fit_splicing(X, y, s_max=1)
        assert fit.support == (5,)

    def test_matches_exhaustive_small_p(self):
        agree = 0
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            X = rng.normal(size=(120, 10))
            beta = np.zeros(10)
            beta[[1, 6]] = [1.5, -2.0]
            y = X @ beta + 0.3 * rng.normal(size=120)
            a = splice_at_size(X, y, 2)
            b = exhaustive_best_subset(X, y, 2)
            agree += a.support == b.support
        assert agree >= 95

    def test_objective_nonincreasing(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(150, 20))
        y = X[:, 3] - X[:, 11] + 0.5 * rng.normal(size=150)
        _, trace = splice_at_size(X, y, 4, return_trace=True)
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))

    def test_scale_equivariance(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(100, 12))
        y = X[:, 2] + 0.2 * rng.normal(size=100)
        a = splice_at_size(X, y, 3)
        b = splice_at_size(X, 4.0 * y, 3)
        assert a.support == b.support
        assert np.allclose(b.coefficients, 4.0 * a.coefficients, rtol=1e-8)

    def test_support_size_capped(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(80, 15))
        y = rng.normal(size=80)
        fit = fit_splicing(X, y, s_max=4)
        assert len(fit.support) <= 4


class TestExhaustive:
    def test_k_equals_p(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(50, 4))
        y = rng.normal(size=50)
        fit = exhaustive_best_subset(X, y, 4, ridge_penalty=1e-8)
        ols = fit_linear(X, y)
        assert np.allclose(fit.coefficients, ols, atol=1e-4)

    def test_k_one(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(60, 6))
        y = 3.0 * X[:, 2] + 0.01 * rng.normal(size=60)
        fit = exhaustive_best_subset(X, y, 1)
        assert fit.support == (2,)

    def test_noiseless_planted(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(40, 8))
        y = X[:, 1] * 2.0 - X[:, 5]
        fit = exhaustive_best_subset(X, y, 2, ridge_penalty=1e-10)
        assert fit.support == (1, 5)
        assert fit.cv_score < 1e-10  # rss

    def test_budget(self):
        X = np.zeros((10, 40))
        with pytest.raises(BudgetError):
            exhaustive_best_subset(X, np.zeros(10), 15)


class TestQuantile:
    def test_intercept_only_median(self):
        rng = np.random.default_rng(14)
        y = rng.normal(size=201)
        beta = fit_quantile(np.ones((201, 1)), y, 0.5, 0.0)
        assert abs(beta[0] - np.median(y)) < 1e-3 * max(1.0, np.std(y))

    def test_intercept_only_low_quantile(self):
        rng = np.random.default_rng(15)
        y = rng.normal(size=400)
        beta = fit_quantile(np.ones((400, 1)), y, 0.05, 0.0)
        order = np.sort(y)
        # minimiser lies between adjacent order statistics around 0.05*n
        lo, hi = order[17], order[21]
        assert lo - 1e-3 <= beta[0] <= hi + 1e-3

    def test_symmetric_noise_matches_ols(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(2000, 3))
        y = X @ np.array([1.0, -0.5, 2.0]) + rng.normal(size=2000)
        bq = fit_quantile(X, y, 0.5, 0.0)
        bo = fit_linear(X, y)
        assert np.max(np.abs(bq - bo)) < 0.1

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(50, 4))
        y = rng.normal(size=50)
        beta = rng.normal(size=4)
        h = 1e-3  # generous smoothing keeps the FD stencil inside one branch
        obj0, grad = _smoothed_pinball_and_grad(beta, X, y, 0.3, 0.01, h)
        eps = 1e-7
        for j in range(4):
            e = np.zeros(4)
            e[j] = eps
            op, _ = _smoothed_pinball_and_grad(beta + e, X, y, 0.3, 0.01, h)
            om, _ = _smoothed_pinball_and_grad(beta - e, X, y, 0.3, 0.01, h)
            fd = (op - om) / (2 * eps)
            assert abs(fd - grad[j]) < 1e-5 * max(1.0, abs(grad[j]))

    def test_never_worse_than_zero(self):
        rng = np.random.default_rng(18)
        X = rng.normal(size=(80, 5))
        y = rng.normal(size=80)
        for tau in (0.05, 0.5, 0.95):
            beta = fit_quantile(X, y, tau, 1e-4)
            assert pinball_loss(y - X @ beta, tau) <= pinball_loss(y, tau) + 1e-12

    def test_bad_tau(self):
        with pytest.raises(ConfigurationError):
            fit_quantile(np.ones((10, 1)), np.zeros(10), 1.5, 0.0)


class TestRif:
    def test_recentring_identity(self):
        rng = np.random.default_rng(19)
        y = rng.normal(size=97)
        X = np.column_stack([np.ones(97), rng.normal(size=97)])
        coef, _ = fit_rif(X, y, 0.5)
        # by recentring, the fitted mean equals the sample quantile exactly
        qhat = np.quantile(y, 0.5)
        assert abs(np.mean(X @ coef) - qhat) < 1e-10

    def test_intercept_only_equals_quantile(self):
        rng = np.random.default_rng(20)
        y = rng.normal(size=55)
        coef, _ = fit_rif(np.ones((55, 1)), y, 0.7)
        assert abs(coef[0] - np.quantile(y, 0.7)) < 1e-10

    def test_robust_close_to_classical_under_homoscedasticity(self):
        rng = np.random.default_rng(21)
        ratios = []
        for _ in range(100):
            X = np.column_stack([np.ones(150), rng.normal(size=(150, 2))])
            y = X @ np.array([0.5, 1.0, -1.0]) + rng.normal(size=150)
            _, se_rob = fit_rif(X, y, 0.5)
            # classical OLS SEs of the same RIF regression
            qhat = np.quantile(y, 0.5)
            coef, _, _, _ = np.linalg.lstsq(X, y * 0 + qhat, rcond=None)  # placeholder shape
            # recompute classical from scratch on the RIF response
            from pdesieve.regress import _silverman_bandwidth

            h = _silverman_bandwidth(y)
            z = (qhat - y) / h
            f = np.mean(np.exp(-0.5 * z**2) / np.sqrt(2 * np.pi)) / h
            infl = (0.5 - (y <= qhat)) / f
            rif = qhat + infl - infl.mean()
            b = np.linalg.lstsq(X, rif, rcond=None)[0]
            resid = rif - X @ b
            s2 = resid @ resid / (150 - 3)
            se_cls = np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))
            ratios.append(se_rob / se_cls)
        mean_ratio = np.mean(ratios, axis=0)
        assert np.all(mean_ratio > 0.75) and np.all(mean_ratio < 1.25)

    def test_too_few_rows(self):
        with pytest.raises(ConfigurationError):
            fit_rif(np.ones((4, 3)), np.arange(4.0), 0.5)


class TestLinearShap:
    def test_hand_case(self):
        # coef (2, 0); column one is (1, 3) with mean 2
        X = np.array([[1.0, 5.0], [3.0, 7.0]])
        z = mean_abs_shap(X, np.array([2.0, 0.0]))
        assert np.allclose(z, [2.0, 0.0])

    def test_matches_bruteforce_shapley(self):
        # independent-marginal Shapley by direct enumeration over coalitions
        rng = np.random.default_rng(22)
        n, p = 12, 5
        X = rng.normal(size=(n, p))
        coef = rng.normal(size=p)
        mu = X.mean(axis=0)

        def value(subset, x):
            # expected prediction with features outside `subset` marginalised
            return sum(coef[j] * (x[j] if j in subset else mu[j]) for j in range(p))

        brute = np.zeros((n, p))
        for j in range(p):
            others = [k for k in range(p) if k != j]
            for r in range(p):
                for sub in itertools.combinations(others, r):
                    wgt = (
                        math.factorial(len(sub))
                        * math.factorial(p - len(sub) - 1)
                        / math.factorial(p)
                    )
                    for i in range(n):
                        brute[i, j] += wgt * (
                            value(set(sub) | {j}, X[i]) - value(set(sub), X[i])
                        )
        closed = linear_shap_values(X, coef)
        assert np.max(np.abs(brute - closed)) < 1e-8
