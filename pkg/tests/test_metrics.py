from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoretoken.errors import ConstantInput, LengthMismatch, TooFewSamples
from scoretoken.metrics import bootstrap_ci, plcc, rankdata, srcc


def brute_ranks(x):
    """rank_i = 1 + #smaller + (#equal - 1) / 2."""
    return [1 + sum(b < a for b in x) + (sum(b == a for b in x) - 1) / 2 for a in x]


def brute_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


def brute_spearman_no_ties(x, y):
    n = len(x)
    d2 = sum((a - b) ** 2 for a, b in zip(brute_ranks(x), brute_ranks(y)))
    return 1 - 6 * d2 / (n * (n * n - 1))


class TestExamples:
    def test_identity_and_negation(self):
        y = np.array([3.0, 1.0, 4.0, 1.5, 9.0])
        assert plcc(y, y) == pytest.approx(1.0)
        assert plcc(-y, y) == pytest.approx(-1.0)
        assert srcc(y, y) == pytest.approx(1.0)

    def test_hand_values(self):
        assert plcc([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-12)
        assert srcc([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-12)

    def test_average_rank_ties(self):
        assert srcc([1, 1, 2], [3, 5, 9]) == pytest.approx(math.sqrt(3) / 2, abs=1e-9)
        np.testing.assert_array_equal(rankdata([1, 1, 2]), [1.5, 1.5, 3.0])

    def test_monotone_transform(self):
        y = np.linspace(0.1, 5, 40)
        assert srcc(np.exp(y) + y**3, y) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(ConstantInput):
            plcc([1, 1, 1], [1, 2, 3])
        with pytest.raises(ConstantInput):
            srcc([1, 2, 3], [5, 5, 5])
        with pytest.raises(LengthMismatch):
            plcc([1, 2], [1, 2, 3])
        with pytest.raises(TooFewSamples):
            plcc([1], [2])
        with pytest.raises(ValueError):
            plcc([1, np.nan, 2], [1, 2, 3])

    def test_rounding_noise_counts_as_constant(self):
        jitter = 50.0 + np.array([0.0, 7.1e-15, -7.1e-15, 0.0])
        for f in (plcc, srcc):
            with pytest.raises(ConstantInput):
                f(jitter, [1, 2, 3, 4])
        assert plcc([1e-12, 2e-12, 3e-12], [1, 2, 3]) == pytest.approx(1.0)


class TestOracle:
    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(3, 51))
            # coarse values so ties are common
            x = list(rng.integers(0, 8, size=n).astype(float))
            y = list(np.round(rng.normal(size=n), 1))
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            assert plcc(x, y) == pytest.approx(brute_pearson(x, y), abs=1e-12)
            assert srcc(x, y) == pytest.approx(brute_pearson(brute_ranks(x), brute_ranks(y)), abs=1e-12)

    def test_closed_form_without_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            x, y = list(rng.permutation(n) * 1.0), list(rng.normal(size=n))
            assert srcc(x, y) == pytest.approx(brute_spearman_no_ties(x, y), abs=1e-12)

    def test_against_scipy(self):
        stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.integers(0, 5, size=30).astype(float)
            y = x + rng.normal(size=30)
            assert srcc(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)
            assert plcc(x, y) == pytest.approx(stats.pearsonr(x, y).statistic, abs=1e-12)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=40), st.integers(0, 2**31))
    def test_symmetry_and_range(self, xs, seed):
        x = np.array(xs)
        y = x + np.random.default_rng(seed).normal(size=x.size)
        if np.std(x) < 1e-6 or np.std(y) < 1e-6:
            return  # numerically constant; ConstantInput is the contract there
        for f in (plcc, srcc):
            assert f(x, y) == pytest.approx(f(y, x), abs=1e-12)
            assert -1.0 <= f(x, y) <= 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31))
    def test_srcc_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=30), rng.normal(size=30)
        a, b = rng.uniform(0.1, 3.0, size=2)
        fx = np.arcsinh(a * x) + b * x  # strictly increasing
        assert srcc(fx, y) == pytest.approx(srcc(x, y), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 100), st.floats(-100, 100))
    def test_plcc_affine_invariance(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=25), rng.normal(size=25)
        assert plcc(scale * x + shift, y) == pytest.approx(plcc(x, y), abs=1e-9)


class TestBootstrap:
    def test_perfect_correlation(self):
        x = np.arange(50.0)
        assert bootstrap_ci(x, 2 * x + 1) == (1.0, 1.0)

    def test_brackets_point_estimate_and_matches_direct_resampling(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=80)
        y = x + rng.normal(size=80)
        lo, hi = bootstrap_ci(x, y, "plcc", n_resamples=500, seed=9)
        assert lo <= plcc(x, y) <= hi
        r = np.random.default_rng(9)
        vals = []
        for _ in range(500):
            idx = r.integers(0, 80, size=80)
            vals.append(brute_pearson(list(x[idx]), list(y[idx])))
        np.testing.assert_allclose((lo, hi), np.percentile(vals, [2.5, 97.5]), atol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        x, y = rng.normal(size=30), rng.normal(size=30)
        assert bootstrap_ci(x, y, seed=1) == bootstrap_ci(x, y, seed=1)

    def test_preconditions(self):
        x = np.arange(20.0)
        with pytest.raises(TooFewSamples):
            bootstrap_ci(x, x, n_resamples=50)
        with pytest.raises(TooFewSamples):
            bootstrap_ci(x[:9], x[:9])
