"""Statistical tests cross-checked against scipy.stats as an independent reference."""

import numpy as np
import pytest
import scipy.stats

from reachbench.stattests import (
    StatTestError,
    mann_whitney_u,
    normality_check,
    shapiro_wilk,
    welch_t_test,
)


def _vectors(seed, n_pairs, sizes=(5, 8, 12, 25, 40)):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_pairs):
        na, nb = rng.choice(sizes, 2)
        dist = i % 3
        if dist == 0:
            a, b = rng.normal(0, 1, na), rng.normal(0.5, 2, nb)
        elif dist == 1:
            a, b = rng.exponential(1, na), rng.exponential(1.5, nb)
        else:
            a, b = rng.uniform(0, 1, na), rng.uniform(0.2, 1.2, nb)
        out.append((a, b))
    return out


class TestWelch:
    @pytest.mark.parametrize("idx", range(20))
    def test_matches_scipy(self, idx):
        a, b = _vectors(100 + idx, 1)[0]
        stat, dof, p = welch_t_test(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert stat == pytest.approx(ref.statistic, abs=1e-10)
        assert p == pytest.approx(ref.pvalue, abs=1e-6)
        assert dof == pytest.approx(ref.df, abs=1e-9)

    def test_antisymmetric(self):
        a, b = _vectors(7, 1)[0]
        sa, _, pa = welch_t_test(a, b)
        sb, _, pb = welch_t_test(b, a)
        assert sa == pytest.approx(-sb) and pa == pytest.approx(pb)

    def test_zero_variance_equal_means(self):
        stat, _, p = welch_t_test([2.0, 2.0, 2.0], [2.0, 2.0])
        assert stat == 0.0 and p == 1.0

    def test_zero_variance_unequal_means(self):
        stat, _, p = welch_t_test([2.0, 2.0], [3.0, 3.0])
        assert stat == float("-inf") and p == 0.0

    def test_too_small_sample_rejected(self):
        with pytest.raises(StatTestError):
            welch_t_test([1.0], [1.0, 2.0])


class TestShapiroWilk:
    @pytest.mark.parametrize("n", [3, 4, 5, 8, 11, 12, 20, 50, 200])
    def test_matches_scipy_across_sizes(self, n):
        rng = np.random.default_rng(n)
        for sample in (rng.normal(0, 1, n), rng.exponential(1, n)):
            w, p = shapiro_wilk(sample)
            ref = scipy.stats.shapiro(sample)
            assert w == pytest.approx(ref.statistic, abs=1e-6)
            assert p == pytest.approx(ref.pvalue, abs=1e-6)

    def test_rejects_clearly_nonnormal(self):
        rng = np.random.default_rng(0)
        sample = np.concatenate([rng.normal(0, 0.1, 30), rng.normal(10, 0.1, 30)])
        _, p = shapiro_wilk(sample)
        assert p < 0.001

    def test_accepts_normal_sample(self):
        _, p = shapiro_wilk(np.random.default_rng(5).normal(0, 1, 60))
        assert p > 0.05

    def test_constant_sample_rejected(self):
        with pytest.raises(StatTestError, match="constant"):
            shapiro_wilk([1.0, 1.0, 1.0, 1.0])

    @pytest.mark.parametrize("n", [2, 5001])
    def test_size_limits(self, n):
        with pytest.raises(StatTestError):
            shapiro_wilk(np.arange(n, dtype=float))

    def test_normality_check_alias(self):
        sample = np.random.default_rng(1).normal(0, 1, 20)
        assert normality_check(sample) == shapiro_wilk(sample)


class TestMannWhitney:
    @pytest.mark.parametrize("idx", range(20))
    def test_matches_scipy(self, idx):
        a, b = _vectors(300 + idx, 1)[0]
        u, p = mann_whitney_u(a, b)
        tie_free = len(np.unique(np.concatenate([a, b]))) == len(a) + len(b)
        if tie_free and len(a) <= 20 and len(b) <= 20:
            ref = scipy.stats.mannwhitneyu(a, b, method="exact")
        else:
            ref = scipy.stats.mannwhitneyu(a, b, method="asymptotic",
                                           use_continuity=True)
        assert u == pytest.approx(ref.statistic, abs=1e-10)
        assert p == pytest.approx(ref.pvalue, abs=1e-6)

    def test_exact_path_with_ties_uses_approximation(self):
        a = [1.0, 2.0, 2.0, 3.0]
        b = [2.0, 4.0, 5.0, 6.0]
        u, p = mann_whitney_u(a, b)
        ref = scipy.stats.mannwhitneyu(a, b, method="asymptotic", use_continuity=True)
        assert u == ref.statistic and p == pytest.approx(ref.pvalue, abs=1e-6)

    def test_u_statistics_sum_identity(self):
        a, b = _vectors(9, 1)[0]
        u1, _ = mann_whitney_u(a, b)
        u2, _ = mann_whitney_u(b, a)
        assert u1 + u2 == pytest.approx(len(a) * len(b))

    def test_identical_constant_samples(self):
        u, p = mann_whitney_u([3.0, 3.0, 3.0], [3.0, 3.0])
        assert p == 1.0

    def test_complete_separation_small_samples(self):
        u, p = mann_whitney_u([1.0, 2.0, 3.0], [10.0, 11.0, 12.0])
        assert u == 0.0
        assert p == pytest.approx(0.1, abs=1e-12)  # 2 / C(6,3)

    def test_empty_sample_rejected(self):
        with pytest.raises(StatTestError):
            mann_whitney_u([], [1.0])
