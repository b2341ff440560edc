import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from biasbench.errors import ConfigError, DataError, DegenerateInputError
from biasbench.stats import (
    LabelCounts,
    expected_dqe_samples,
    kendall_tau_b,
    monte_carlo_dqe,
    rank_with_ties,
    spearman_rho,
)


def brute_tau_b(x, y):
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx = np.sign(x[i] - x[j])
        dy = np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx == dy:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def permutation_p(stat, x, y):
    """Two-sided p over all permutations of y."""
    observed = abs(stat(x, y))
    hits = total = 0
    for perm in itertools.permutations(y):
        total += 1
        if abs(stat(x, np.array(perm))) >= observed - 1e-12:
            hits += 1
    return hits / total


def rho_of(x, y):
    return float(np.corrcoef(rank_with_ties(x), rank_with_ties(y))[0, 1])


class TestExpectedDQE:
    def test_hand_value(self):
        est = expected_dqe_samples([LabelCounts("pos", 10_000, 20_000, 50_000)])
        assert est.total_expected == 4000.0

    def test_zero_dqe(self):
        est = expected_dqe_samples([LabelCounts("a", 5, 0, 10), LabelCounts("b", 3, 0, 7)])
        assert est.total_expected == 0.0

    def test_sum_over_labels(self):
        est = expected_dqe_samples([LabelCounts("a", 10, 5, 20), LabelCounts("b", 6, 3, 9)])
        assert [e.expected for e in est.per_label] == [2.5, 2.0]
        assert est.total_expected == 4.5

    def test_draws_exceed_total(self):
        with pytest.raises(DataError, match="exceed"):
            expected_dqe_samples([LabelCounts("a", 11, 1, 10)])

    def test_dqe_exceeds_total(self):
        with pytest.raises(DataError, match="exceeds"):
            expected_dqe_samples([LabelCounts("a", 1, 11, 10)])

    @given(st.lists(st.tuples(st.integers(0, 200), st.integers(0, 200), st.integers(1, 200)), max_size=5))
    def test_bounds(self, rows):
        labels = []
        for i, (a, b, n) in enumerate(rows):
            labels.append(LabelCounts(str(i), min(a, n), min(b, n), n))
        est = expected_dqe_samples(labels)
        assert 0 <= est.total_expected <= sum(lc.draws for lc in labels) + 1e-9


class TestMonteCarlo:
    @pytest.mark.parametrize(
        "labels",
        [
            [LabelCounts("a", 30, 40, 100)],
            [LabelCounts("a", 10, 7, 25), LabelCounts("b", 20, 20, 60)],
            [LabelCounts("a", 5, 5, 5)],
        ],
    )
    def test_within_three_standard_errors(self, labels):
        mean, samples = monte_carlo_dqe(labels, 20_000, seed=1, return_samples=True)
        exact = expected_dqe_samples(labels).total_expected
        se = samples.std() / math.sqrt(samples.size)
        assert abs(mean - exact) <= 3 * se + 1e-12

    def test_hypergeometric_variance(self):
        lc = LabelCounts("a", 30, 40, 100)
        _, samples = monte_carlo_dqe([lc], 20_000, seed=2, return_samples=True)
        ref = sps.hypergeom(100, 40, 30)
        assert samples.var() == pytest.approx(ref.var(), rel=0.05)

    def test_deterministic(self):
        labels = [LabelCounts("a", 10, 7, 25)]
        assert monte_carlo_dqe(labels, 500, 3) == monte_carlo_dqe(labels, 500, 3)

    def test_bad_trials(self):
        with pytest.raises(ConfigError):
            monte_carlo_dqe([LabelCounts("a", 1, 1, 2)], 0, 0)


class TestRanks:
    def test_ties_averaged(self):
        np.testing.assert_array_equal(rank_with_ties([3, 1, 3, 2]), [3.5, 1, 3.5, 2])

    def test_empty(self):
        with pytest.raises(DataError):
            rank_with_ties([])

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=30))
    def test_matches_scipy_rankdata(self, xs):
        np.testing.assert_allclose(rank_with_ties(xs), sps.rankdata(xs, method="average"))


class TestKendall:
    def test_hand_value(self):
        r = kendall_tau_b([1, 2, 3, 4, 5], [3, 1, 2, 5, 4])
        assert r.coefficient == pytest.approx(0.4, abs=1e-12)
        assert r.p_method == "exact"

    @pytest.mark.parametrize("sign", [1, -1])
    def test_perfect(self, sign):
        x = np.arange(8.0)
        assert kendall_tau_b(x, sign * x).coefficient == sign

    def test_all_tied(self):
        with pytest.raises(DegenerateInputError):
            kendall_tau_b([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            kendall_tau_b([1, 2, 3], [1, 2])

    def test_bad_method(self):
        with pytest.raises(ConfigError):
            kendall_tau_b([1, 2, 3], [1, 3, 2], method="bootstrap")

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=3, max_size=25))
    def test_brute_force_with_ties(self, pairs):
        x = np.array([a for a, _ in pairs], dtype=float)
        y = np.array([b for _, b in pairs], dtype=float)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            return
        r = kendall_tau_b(x, y)
        assert abs(r.coefficient - brute_tau_b(x, y)) <= 1e-12
        assert kendall_tau_b(x, -y).coefficient == pytest.approx(-r.coefficient, abs=1e-12)
        assert kendall_tau_b(np.exp(x), y).coefficient == pytest.approx(r.coefficient, abs=1e-12)

    @pytest.mark.parametrize("n", [4, 5, 6, 7])
    def test_exact_p_vs_enumeration(self, n):
        rng = np.random.default_rng(n)
        for _ in range(3):
            x = np.arange(n, dtype=float)
            y = rng.permutation(n).astype(float)
            if np.ptp(y) == 0:
                continue
            r = kendall_tau_b(x, y, method="exact")
            assert r.p_value == pytest.approx(permutation_p(brute_tau_b, x, y), abs=1e-12)

    def test_exact_p_vs_scipy(self):
        rng = np.random.default_rng(0)
        for n in (12, 30, 50):
            x, y = rng.permutation(n), rng.permutation(n)
            ours = kendall_tau_b(x, y)
            ref = sps.kendalltau(x, y, method="exact")
            assert ours.p_method == "exact"
            assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_asymptotic_p_vs_scipy_with_ties(self):
        rng = np.random.default_rng(1)
        x, y = rng.integers(0, 6, 120), rng.integers(0, 6, 120)
        ours = kendall_tau_b(x, y)
        ref = sps.kendalltau(x, y, variant="b", method="asymptotic")
        assert ours.p_method == "asymptotic"
        assert ours.coefficient == pytest.approx(ref.statistic, abs=1e-12)
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_exact_rejects_ties(self):
        with pytest.raises(DataError):
            kendall_tau_b([1, 1, 2], [1, 2, 3], method="exact")


class TestSpearman:
    def test_hand_value(self):
        assert spearman_rho([1, 2, 3], [2, 1, 3]).coefficient == pytest.approx(0.5)

    def test_zero_variance(self):
        with pytest.raises(DegenerateInputError):
            spearman_rho([2, 2, 2], [1, 2, 3])

    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 8])
    def test_exact_p_vs_enumeration(self, n):
        rng = np.random.default_rng(100 + n)
        x = np.arange(n, dtype=float)
        y = rng.permutation(n).astype(float)
        r = spearman_rho(x, y)
        assert r.p_method == "exact"
        assert r.p_value == pytest.approx(permutation_p(rho_of, x, y), abs=1e-12)

    def test_exact_cap(self):
        x = np.arange(13.0)
        with pytest.raises(ConfigError):
            spearman_rho(x, x[::-1], method="exact")

    def test_asymptotic_vs_scipy(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=60), rng.integers(0, 9, 60)
        ours = spearman_rho(x, y)
        ref = sps.spearmanr(x, y)
        assert ours.coefficient == pytest.approx(ref.statistic, abs=1e-12)
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_perfect_asymptotic_p_zero(self):
        x = np.arange(20.0)
        r = spearman_rho(x, x ** 3)
        assert r.coefficient == 1.0 and r.p_value == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=3, max_size=30))
    def test_properties(self, pairs):
        x = np.array([a for a, _ in pairs], dtype=float)
        y = np.array([b for _, b in pairs], dtype=float)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            return
        r = spearman_rho(x, y)
        assert -1.0 <= r.coefficient <= 1.0 and 0.0 <= r.p_value <= 1.0
        assert abs(r.coefficient - rho_of(x, y)) <= 1e-12
        assert spearman_rho(x, -y).coefficient == pytest.approx(-r.coefficient, abs=1e-12)
        assert spearman_rho(x ** 3, y).coefficient == pytest.approx(r.coefficient, abs=1e-12)
