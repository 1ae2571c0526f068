import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lungqc.errors import (
    DegenerateLabelsError,
    DegenerateVarianceError,
    EmptyInputError,
    LengthMismatchError,
)
from lungqc.stats import (
    auc,
    bland_altman,
    brier,
    confusion_metrics,
    delong_covariance,
    delong_test,
    kolmogorov_sf,
    ks_two_sample,
    roc_curve,
)
from oracles import (
    bootstrap_delta_auc_variance,
    brute_ecdf_sup,
    correlated_scores,
    kolmogorov_series,
    pair_count_auc,
)


def _instance(draw_n=None, seed=0, levels=10):
    rng = np.random.default_rng(seed)
    n = draw_n or int(rng.integers(2, 201))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 1, 0
    s = rng.integers(0, levels, n) / levels  # coarse grid forces ties
    return s, y


class TestAuc:
    def test_exhaustive_example(self):
        assert auc([0.9, 0.8, 0.1, 0.7], [1, 1, 0, 0]) == 1.0

    def test_ties_and_reversed(self):
        assert auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
        assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateLabelsError):
            auc([0.1, 0.2], [1, 1])
        with pytest.raises(LengthMismatchError):
            auc([0.1, 0.2], [1])
        with pytest.raises(EmptyInputError):
            auc([], [])

    def test_roc_two_points(self):
        r = roc_curve([0.9, 0.1], [1, 0])
        assert r.fpr.tolist() == [0, 0, 1] and r.tpr.tolist() == [0, 1, 1]
        assert r.auc == 1.0 and r.thresholds[0] == np.inf

    def test_roc_single_score(self):
        r = roc_curve([0.4] * 5, [1, 0, 0, 1, 0])
        assert r.fpr.tolist() == [0, 1] and r.tpr.tolist() == [0, 1] and r.auc == 0.5

    @pytest.mark.parametrize("seed", range(25))
    def test_trapezoid_matches_pair_count(self, seed):
        s, y = _instance(seed=seed)
        expected = pair_count_auc(s.tolist(), y.tolist())
        assert abs(roc_curve(s, y).auc - expected) <= 1e-12
        assert abs(auc(s, y) - expected) <= 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_monotone_transform_and_complement(self, seed):
        s, y = _instance(seed=seed)
        a = auc(s, y)
        assert auc(np.exp(3 * s) - 7, y) == a
        r1, r2 = roc_curve(s, y), roc_curve(np.exp(3 * s) - 7, y)
        np.testing.assert_array_equal(r1.fpr, r2.fpr)
        np.testing.assert_array_equal(r1.tpr, r2.tpr)
        assert abs(auc(-s, y) - (1 - a)) <= 1e-12

    def test_roc_monotone(self):
        s, y = _instance(seed=3, levels=1000)
        r = roc_curve(s, y)
        assert np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0)
        assert (r.fpr[-1], r.tpr[-1]) == (1.0, 1.0)


class TestDeLong:
    def test_identical_models_degenerate(self):
        s, y = _instance(seed=1)
        with pytest.raises(DegenerateVarianceError) as ei:
            delong_test(s, s, y)
        assert ei.value.code == "DEGENERATE_VARIANCE"

    def test_antisymmetry(self):
        a, b, y = correlated_scores(30, 30, seed=4)
        r1, r2 = delong_test(a, b, y), delong_test(b, a, y)
        assert r1.delta == -r2.delta and r1.z == -r2.z
        assert r1.p_two_sided == r2.p_two_sided and r1.variance == r2.variance

    def test_covariance_consistent(self):
        a, b, y = correlated_scores(25, 35, seed=5)
        c = delong_covariance(a, b, y)
        r = delong_test(a, b, y)
        assert r.variance == pytest.approx(c[0, 0] + c[1, 1] - 2 * c[0, 1], rel=1e-10)

    def test_monotone_invariance(self):
        a, b, y = correlated_scores(20, 20, seed=6)
        r1, r2 = delong_test(a, b, y), delong_test(np.tanh(a), b ** 3, y)
        assert r1.z == pytest.approx(r2.z, abs=1e-12)

    def test_p_in_range(self):
        a, b, y = correlated_scores(20, 20, seed=7)
        p = delong_test(a, b, y).p_two_sided
        assert 0 < p <= 1

    @pytest.mark.slow
    def test_bootstrap_n40(self):
        a, b, y = correlated_scores(20, 20, seed=8)
        boot = bootstrap_delta_auc_variance(a, b, y, n_boot=100_000, seed=9)
        v = delong_test(a, b, y).variance
        assert abs(v / boot - 1) <= 0.15


class TestBrier:
    def test_examples(self):
        assert brier([1, 0], [1, 0]) == 0.0
        assert brier([0.5, 0.5], [1, 0]) == 0.25
        # direct formula: (0.04 + 0.09 + 0.16) / 3
        assert abs(brier([0.8, 0.3, 0.6], [1, 0, 1]) - 0.29 / 3) <= 1e-12

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            brier([1.2], [1])

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=30))
    def test_bounds(self, pairs):
        p, y = zip(*pairs)
        assert 0 <= brier(p, y) <= 1


class TestKs:
    def test_examples(self):
        assert ks_two_sample([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]).d == 0
        assert ks_two_sample([0, 0], [1, 1]).d == 1
        assert abs(ks_two_sample([1, 2, 3], [2, 3, 4]).d - 1 / 3) <= 1e-12
        assert ks_two_sample([1, 2, 3], [2, 3, 4]).d == brute_ecdf_sup([1, 2, 3], [2, 3, 4])

    def test_edge_p(self):
        assert ks_two_sample([0.3] * 4, [0.3] * 4).p == 1.0
        p = ks_two_sample(np.zeros(2000), np.ones(2000)).p
        assert 0 < p < 1e-300

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 8), min_size=1, max_size=25),
           st.lists(st.integers(0, 8), min_size=1, max_size=25))
    def test_brute_and_symmetry(self, a, b):
        a, b = np.array(a) / 8, np.array(b) / 8
        r = ks_two_sample(a, b)
        assert r.d == brute_ecdf_sup(a.tolist(), b.tolist())
        assert r.d == ks_two_sample(b, a).d and 0 <= r.d <= 1

    @pytest.mark.parametrize("lam", [0.05, 0.3, 0.6, 0.99, 1.0, 1.4, 2.5, 5.0])
    def test_sf_against_series(self, lam):
        assert abs(kolmogorov_sf(lam) - kolmogorov_series(lam, terms=2000)) <= 1e-9


class TestBlandAltman:
    def test_identical(self):
        r = bland_altman([0.1, 0.5, 0.7], [0.1, 0.5, 0.7])
        assert (r.bias, r.loa_low, r.loa_high) == (0, 0, 0)

    def test_constant_shift(self):
        a = np.array([0.25, 0.5, 0.75])
        r = bland_altman(a, a + 0.125)
        assert r.bias == 0.125 and r.sd == 0 and r.loa_low == r.loa_high == 0.125

    def test_derived(self):
        r = bland_altman([0.2, 0.4], [0.3, 0.7])
        # direct formula: diffs [0.1, 0.3], sd = sqrt(0.02)
        assert abs(r.bias - 0.2) <= 1e-12
        assert abs(r.sd - math.sqrt(0.02)) <= 1e-12
        assert abs(r.loa_low - (0.2 - 1.96 * math.sqrt(0.02))) <= 1e-12
        assert abs(r.loa_high - (0.2 + 1.96 * math.sqrt(0.02))) <= 1e-12
        np.testing.assert_allclose(r.diffs, [0.1, 0.3])
        np.testing.assert_allclose(r.means, [0.25, 0.55])

    def test_antisymmetry(self):
        a, b = [0.1, 0.4, 0.35], [0.2, 0.3, 0.8]
        r, s = bland_altman(a, b), bland_altman(b, a)
        assert r.bias == -s.bias and r.sd == s.sd
        assert r.loa_low == pytest.approx(-s.loa_high, abs=1e-15)

    def test_errors(self):
        with pytest.raises(EmptyInputError):
            bland_altman([], [])
        with pytest.raises(LengthMismatchError):
            bland_altman([1, 2], [1])


class TestConfusion:
    def test_perfect(self):
        m = confusion_metrics([0.9, 0.1], [1, 0])
        assert (m.accuracy, m.sensitivity, m.specificity) == (1, 1, 1)

    def test_absent_specificity(self):
        m = confusion_metrics([0.1, 0.2], [1, 1])
        assert m.sensitivity == 0 and m.specificity is None

    def test_by_hand_table(self):
        # 0.6/1 TP, 0.6/0 FP, 0.4/1 FN, 0.2/0 TN
        m = confusion_metrics([0.6, 0.6, 0.4, 0.2], [1, 0, 1, 0])
        assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 1)
        assert (m.accuracy, m.sensitivity, m.specificity) == (0.5, 0.5, 0.5)

    def test_threshold_inclusive(self):
        assert confusion_metrics([0.5], [1]).tp == 1
        assert confusion_metrics([0.5], [1], threshold=0.51).fn == 1

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            confusion_metrics([], [])
