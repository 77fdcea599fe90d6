import math

import numpy as np
import pytest

from pdesieve.errors import ConfigurationError, DegenerateSampleError
from pdesieve.regress import aic_value, ebic_value
from pdesieve.select import (
    Alternative,
    SelectConfig,
    build_decision_matrix,
    conformal_intervals,
    criterion_pinball,
    criterion_ricomp,
    criterion_uncertainty,
    cwc,
    enumerate_alternatives,
    ic_select,
    mcdm_select,
    murphy_ehm,
)


class TestAlternatives:
    def test_one_per_size(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((100, 3))
        y = X @ np.array([1.0, 0.5, -0.25]) + 0.1 * rng.standard_normal(100)
        alts = enumerate_alternatives(X, y)
        assert [a.size for a in alts] == [1, 2, 3]

    def test_noiseless_two_term_rss_zero(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((80, 5))
        y = 2 * X[:, 1] - X[:, 3]
        alts = enumerate_alternatives(X, y, ridge_penalty=1e-10)
        assert alts[1].support == (1, 3)
        assert alts[1].rss < 1e-12

    def test_cap(self):
        with pytest.raises(ConfigurationError):
            enumerate_alternatives(np.zeros((10, 21)), np.zeros(10))


class TestConformal:
    def test_marginal_coverage(self):
        picps = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((120, 2))
            y = X @ np.array([1.0, -0.5]) + rng.standard_normal(120)
            b = conformal_intervals(X, y, miscoverage=0.1, folds=3, repeats=2, seed=seed)
            picps.append(b.picp)
        assert np.mean(picps) >= 0.87

    def test_zero_noise_narrow_intervals(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((90, 2))
        y = X @ np.array([2.0, 1.0])
        b = conformal_intervals(X, y, miscoverage=0.1, folds=3, repeats=2, seed=3)
        assert b.nmpil <= 0.05

    def test_invalid_miscoverage(self):
        X = np.random.default_rng(4).standard_normal((60, 2))
        with pytest.raises(ConfigurationError):
            conformal_intervals(X, X[:, 0], miscoverage=1.0)

    def test_ordering_invariant(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((60, 2))
        y = X[:, 0] + 0.5 * rng.standard_normal(60)
        b = conformal_intervals(X, y, folds=3, repeats=2, seed=6)
        assert np.all(b.predictions[:, 0] <= b.predictions[:, 1] + 1e-12)
        assert np.all(b.predictions[:, 1] <= b.predictions[:, 2] + 1e-12)
        assert 0.0 <= b.picp <= 1.0 and b.nmpil >= 0.0


class TestPinballCriterion:
    def _bundle(self, y, preds, nulls):
        from pdesieve.select import IntervalBundle

        n = y.size
        return IntervalBundle(
            y=y,
            predictions=preds,
            null_quantiles=nulls,
            repeat_ids=np.zeros(n),
            fold_ids=np.zeros(n),
            adjustments=[0.0],
            picp=1.0,
            nmpil=0.0,
            miscoverage=0.1,
        )

    def test_null_forecast_scores_one(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal(200)
        nulls = np.tile(np.quantile(y, [0.05, 0.5, 0.95]), (200, 1))
        b = self._bundle(y, nulls.copy(), nulls)
        assert criterion_pinball(b) == pytest.approx(1.0)

    def test_perfect_forecast_scores_zero(self):
        rng = np.random.default_rng(8)
        y = rng.standard_normal(50)
        preds = np.tile(y[:, None], (1, 3))
        nulls = np.tile(np.quantile(y, [0.05, 0.5, 0.95]), (50, 1))
        assert criterion_pinball(self._bundle(y, preds, nulls)) == pytest.approx(0.0)

    def test_constant_response_degenerate(self):
        y = np.ones(40)
        nulls = np.ones((40, 3))
        with pytest.raises(DegenerateSampleError):
            criterion_pinball(self._bundle(y, nulls.copy(), nulls))


class TestRicomp:
    def test_orthonormal_equal_variance_no_penalty(self):
        rng = np.random.default_rng(9)
        q, _ = np.linalg.qr(rng.standard_normal((120, 4)))
        X = q * math.sqrt(120)
        y = X @ np.ones(4) + rng.standard_normal(120)
        val = criterion_ricomp(X, y, ridge_penalty=0.0)
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        resid = y - X @ coef
        sigma = 1.4826 * np.median(np.abs(resid - np.median(resid)))
        assert val == pytest.approx(120 * math.log(sigma**2), abs=1e-8)

    def test_ill_conditioned_penalised(self):
        rng = np.random.default_rng(10)
        base = rng.standard_normal((150, 3))
        X_bad = base.copy()
        X_bad[:, 2] = X_bad[:, 1] + 1e-3 * X_bad[:, 2]  # condition number ~1e3+
        q, _ = np.linalg.qr(X_bad)
        X_good = q * np.linalg.norm(X_bad) / math.sqrt(3)
        y = base @ np.array([1.0, 1.0, 1.0]) + 0.5 * rng.standard_normal(150)
        assert criterion_ricomp(X_bad, y) > criterion_ricomp(X_good, y)

    def test_single_column_no_complexity_term(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((80, 1))
        y = 2 * X[:, 0] + 0.3 * rng.standard_normal(80)
        val = criterion_ricomp(X, y, ridge_penalty=0.0)
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        resid = y - X @ coef
        sigma = 1.4826 * np.median(np.abs(resid - np.median(resid)))
        assert val == pytest.approx(80 * math.log(sigma**2), abs=1e-8)


class TestUncertainty:
    def test_scale_invariance(self):
        rng = np.random.default_rng(12)
        X = np.column_stack([np.ones(100), rng.standard_normal((100, 2))])
        y = X @ np.array([0.5, 1.0, -2.0]) + rng.standard_normal(100)
        a = criterion_uncertainty(X, y)
        b = criterion_uncertainty(X, 7.5 * y)
        assert a == pytest.approx(b, rel=1e-10)

    def test_signal_lower_than_noise_columns(self):
        rng = np.random.default_rng(13)
        n = 200
        X_sig = rng.standard_normal((n, 2))
        y = X_sig @ np.array([2.0, -1.5]) + 0.3 * rng.standard_normal(n)
        X_noise = rng.standard_normal((n, 2))
        assert criterion_uncertainty(X_sig, y) < criterion_uncertainty(X_noise, y)

    def test_collinear_columns_inflate(self):
        rng = np.random.default_rng(14)
        n = 200
        a = rng.standard_normal(n)
        X_dup = np.column_stack([a, a + 1e-4 * rng.standard_normal(n)])
        X_ind = np.column_stack([a, rng.standard_normal(n)])
        y = a + 0.2 * rng.standard_normal(n)
        assert criterion_uncertainty(X_dup, y) > criterion_uncertainty(X_ind, y)


class TestMurphyEhm:
    def test_identity_exact(self):
        rng = np.random.default_rng(15)
        for tau in (0.05, 0.5, 0.95):
            y = rng.standard_normal(300)
            preds = rng.standard_normal(300)
            mcb, dsc, unc = murphy_ehm(preds, y, tau)
            from pdesieve.regress import pinball_loss

            s_raw = pinball_loss(y - preds, tau)
            assert s_raw == pytest.approx(mcb - dsc + unc, abs=1e-10)
            assert mcb >= -1e-10 and dsc >= -1e-10

    def test_well_specified_low_miscalibration(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal(4000)
        y = x + rng.standard_normal(4000)
        preds = x + np.quantile(rng.standard_normal(100_000), 0.5)
        mcb, _, unc = murphy_ehm(preds, y, 0.5)
        assert mcb < 0.05 * unc

    def test_constant_null_forecast(self):
        rng = np.random.default_rng(17)
        y = rng.standard_normal(500)
        q = np.quantile(y, 0.5, method="inverted_cdf")
        mcb, dsc, unc = murphy_ehm(np.full(500, q), y, 0.5)
        assert mcb == pytest.approx(0.0, abs=1e-12)
        assert dsc == pytest.approx(0.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(DegenerateSampleError):
            murphy_ehm(np.zeros(5), np.arange(5.0), 0.5)


class TestCwc:
    def test_at_threshold_doubles(self):
        assert cwc(0.85, 0.4) == pytest.approx(0.8)

    def test_above_threshold_passthrough(self):
        assert cwc(0.90, 0.4) == pytest.approx(0.4, rel=1e-4)

    def test_zero_width(self):
        assert cwc(0.5, 0.0) == 0.0


@pytest.fixture(scope="module")
def planted_selection_problem():
    rng = np.random.default_rng(18)
    n, p = 240, 5
    X = rng.standard_normal((n, p))
    X /= np.linalg.norm(X, axis=0)
    y = 30 * X[:, 0] - 22 * X[:, 1] + 0.4 * rng.standard_normal(n)
    alts = enumerate_alternatives(X, y)
    complexities = [2, 3, 4, 5, 6]
    cfg = SelectConfig(repeats=3, seed=5)
    dm = build_decision_matrix(alts, X, y, complexities, cfg)
    return X, y, alts, dm


class TestDecisionMatrix:
    def test_shape_and_weights(self, planted_selection_problem):
        _, _, _, dm = planted_selection_problem
        assert dm.raw.shape == (5, 6)
        assert dm.weights.shape == (6,)
        assert np.all(dm.weights >= 0)
        assert dm.weights.sum() == pytest.approx(1.0)
        assert np.all(np.isfinite(dm.raw))

    def test_duplicate_alternatives_zero_weight_column(self):
        rng = np.random.default_rng(19)
        n = 120
        X = rng.standard_normal((n, 2))
        y = X @ np.array([3.0, -2.0]) + 0.2 * rng.standard_normal(n)
        alt = Alternative((0, 1), 2, np.array([3.0, -2.0]), 1.0)
        twin = Alternative((0, 1), 2, np.array([3.0, -2.0]), 1.0)
        dm = build_decision_matrix([alt, twin], X, y, [1, 1], SelectConfig(repeats=2))
        assert np.allclose(dm.raw[0], dm.raw[1])
        assert dm.weights.sum() == pytest.approx(1.0)

    def test_selects_true_size_two(self, planted_selection_problem):
        _, _, _, dm = planted_selection_problem
        res = mcdm_select(dm)
        assert res.winner.size == 2
        assert res.winner.support == (0, 1)

    def test_recursion_head_equals_single_pass(self, planted_selection_problem):
        _, _, _, dm = planted_selection_problem
        res = mcdm_select(dm)
        from pdesieve.mcdm import (
            aggregate_ranks,
            mcdm_preferences,
            ordering_from_scores,
        )

        orderings = []
        for method in ("topsis", "vikor", "comet", "promethee2", "cocoso"):
            s, h = mcdm_preferences(dm.transformed, method, dm.weights, True)
            orderings.append(ordering_from_scores(s, h))
        single = aggregate_ranks(orderings, sizes=dm.sizes.tolist())
        assert res.ordering[0] == single["ordering"][0]

    def test_single_alternative_short_circuit(self):
        alt = Alternative((0,), 1, np.array([1.0]), 0.5)
        dm = DecisionMatrixStub([alt])
        res = mcdm_select(dm)
        assert res.ordering == [0]
        assert res.winner is alt


class DecisionMatrixStub:
    def __init__(self, alternatives):
        from pdesieve.select import CRITERIA

        self.alternatives = alternatives
        self.criteria = CRITERIA
        self.raw = np.ones((1, 6))
        self.transformed = np.ones((1, 6))
        self.weights = np.full(6, 1 / 6)
        self.minimize = np.ones(6, dtype=bool)
        self.sizes = np.array([a.size for a in alternatives])


class TestIcSelect:
    def test_worked_ebic_value(self):
        assert ebic_value(100, 1.0, 2, 10, 1.0) == pytest.approx(16.824, abs=1e-3)

    def test_aic_formula(self):
        assert aic_value(50, 2.0, 3) == pytest.approx(50 * math.log(2.0) + 6)

    def test_equal_variance_prefers_smallest(self):
        rng = np.random.default_rng(20)
        X = rng.standard_normal((100, 4))
        y = rng.standard_normal(100)
        # alternatives sharing identical support produce identical sigma2
        alts = [
            Alternative((0,), 1, np.zeros(1), 1.0),
            Alternative((0, 1), 2, np.zeros(2), 1.0),
        ]
        X2 = X.copy()
        X2[:, 1] = X2[:, 0]  # second column adds nothing
        res = ic_select(alts, X2, y)
        assert res["aic"].size == 1
        assert res["ebic"].size == 1
