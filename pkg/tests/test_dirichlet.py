import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddu import dirichlet as dr
from ddu.exceptions import IndexConflict, IndexOutOfRange, InfeasibleMI, InvalidDistribution
from ddu.mathcore import digamma, make_rng, trigamma

N_MC = 1_000_000


def mc(alpha, seed=0, n=N_MC):
    """Samples drawn by numpy's own Dirichlet sampler, independent of ``dr.sample``."""
    return np.random.default_rng(seed).dirichlet(alpha, size=n)


def within_se(samples, analytic, k=3.0):
    mean = samples.mean()
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    return abs(mean - analytic) <= k * se, (mean, se)


def categorical_entropy(p):
    return -np.sum(p * np.log(p), axis=1)


class TestParams:
    def test_invariants(self):
        d = dr.DirichletParams([1.0, 2.0, 3.0])
        assert d.alpha0 == 6.0 and d.k == 3
        np.testing.assert_allclose(d.mean, [1 / 6, 2 / 6, 3 / 6])
        with pytest.raises(ValueError):
            dr.DirichletParams([1.0, 0.0])

    def test_index_errors(self):
        with pytest.raises(IndexOutOfRange):
            dr.expected_log_p([1.0, 1.0], 2)
        with pytest.raises(IndexOutOfRange):
            dr.cov_log_p([1.0, 1.0], 0, -1)


class TestExpectedLogP:
    def test_uniform(self):
        assert dr.expected_log_p([1.0, 1.0], 0) == pytest.approx(-1.0, rel=1e-12)

    def test_symmetric(self):
        vals = [dr.expected_log_p([2.5] * 4, i) for i in range(4)]
        assert len(set(vals)) == 1

    def test_monte_carlo(self):
        p = mc([2.0, 3.0, 5.0])
        for i in range(3):
            ok, info = within_se(np.log(p[:, i]), dr.expected_log_p([2.0, 3.0, 5.0], i))
            assert ok, info


class TestCovLogP:
    def test_off_diagonal(self):
        assert dr.cov_log_p([1.0, 1.0, 1.0], 0, 1) == pytest.approx(-trigamma(3.0), rel=1e-15)

    def test_diagonal(self):
        assert dr.cov_log_p([1.0, 1.0], 0, 0) == pytest.approx(1.0, rel=1e-12)

    def test_monte_carlo(self):
        alpha = [2.0, 5.0]
        logp = np.log(mc(alpha, seed=1))
        centred = logp - logp.mean(axis=0)
        for i in range(2):
            for j in range(2):
                ok, info = within_se(centred[:, i] * centred[:, j], dr.cov_log_p(alpha, i, j))
                assert ok, (i, j, info)


class TestMoment:
    def test_reduces_to_log_mean(self):
        assert dr.moment_pn_pm_logp([2.0, 3.0, 4.0], 0, 2, 0, 0) == dr.expected_log_p([2.0, 3.0, 4.0], 0)

    def test_hand_case(self):
        assert dr.moment_pn_pm_logp([1.0, 1.0], 0, 1, 1, 0) == pytest.approx(-0.25, rel=1e-12)

    def test_monte_carlo(self):
        p = mc([2.0, 3.0], seed=2)
        ok, info = within_se(p[:, 0] * p[:, 1] ** 2 * np.log(p[:, 0]), dr.moment_pn_pm_logp([2.0, 3.0], 0, 1, 1, 2))
        assert ok, info

    def test_index_conflict(self):
        with pytest.raises(IndexConflict):
            dr.moment_pn_pm_logp([1.0, 2.0], 1, 1, 1, 1)

    def test_rising_factorial(self):
        assert dr.rising_factorial(3.0, 0) == 1.0
        assert dr.rising_factorial(3.0, 3) == 3.0 * 4.0 * 5.0


class TestExpectedEntropy:
    def test_closed_cases(self):
        assert dr.expected_entropy([1.0, 1.0]) == pytest.approx(0.5, abs=1e-12)
        assert dr.expected_entropy([1.0, 1.0, 1.0]) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_monte_carlo_uniform(self):
        ok, info = within_se(categorical_entropy(mc([1.0, 1.0], seed=0)), 0.5)
        assert ok, info

    def test_concentration_limit(self):
        assert abs(dr.expected_entropy([1e4] * 3) - np.log(3.0)) < 1e-3

    def test_monotone_in_concentration(self):
        rng = np.random.default_rng(4)
        grid = np.logspace(-3, 6, 60)
        for _ in range(100):
            p = rng.dirichlet(np.ones(rng.integers(2, 8)))
            vals = [dr.expected_entropy(a0 * p) for a0 in grid]
            assert np.all(np.diff(vals) > 0)


class TestEntropyVariance:
    def test_concentrated(self):
        assert abs(dr.entropy_variance([1e6, 1e6])) < 1e-4

    def test_uniform_bernoulli(self):
        h = categorical_entropy(mc([1.0, 1.0], seed=5))
        ok, info = within_se((h - h.mean()) ** 2, dr.entropy_variance([1.0, 1.0]))
        assert ok, info

    @pytest.mark.parametrize("k", [2, 3, 5, 10])
    def test_random_alphas(self, k):
        rng = np.random.default_rng(k)
        for trial in range(5):
            alpha = np.exp(rng.uniform(np.log(0.5), np.log(20.0), size=k))
            h = categorical_entropy(mc(alpha, seed=100 * k + trial, n=200_000))
            ok, info = within_se((h - h.mean()) ** 2, dr.entropy_variance(alpha))
            assert ok, (alpha, info)

    @given(st.lists(st.floats(0.05, 1e4), min_size=2, max_size=10))
    def test_non_negative(self, alpha):
        assert dr.entropy_variance(alpha) >= -1e-10

    def test_explicit_double_sum(self):
        # the same variance assembled term by term from pairwise moments
        alpha = np.array([0.7, 2.0, 3.5])
        a0 = alpha.sum()
        total = 0.0
        for i in range(3):
            for j in range(3):
                if i == j:
                    e = alpha[i] * (alpha[i] + 1) / (a0 * (a0 + 1)) * (
                        trigamma(alpha[i] + 2) - trigamma(a0 + 2) + (digamma(alpha[i] + 2) - digamma(a0 + 2)) ** 2
                    )
                else:
                    e = alpha[i] * alpha[j] / (a0 * (a0 + 1)) * (
                        (digamma(alpha[i] + 1) - digamma(a0 + 2)) * (digamma(alpha[j] + 1) - digamma(a0 + 2)) - trigamma(a0 + 2)
                    )
                total += e
        total -= dr.expected_entropy(alpha) ** 2
        assert dr.entropy_variance(alpha) == pytest.approx(total, rel=1e-12)


class TestFit:
    def test_uniform_two_class(self):
        d = dr.fit_from_pe_mi([0.5, 0.5], np.log(2.0) - 0.5)
        assert d.alpha0 == pytest.approx(2.0, rel=1e-8)
        np.testing.assert_allclose(d.alpha, [1.0, 1.0], rtol=1e-8)

    def test_zero_mi(self):
        p = np.array([0.2, 0.3, 0.5])
        d = dr.fit_from_pe_mi(p, 0.0)
        h = -np.sum(p * np.log(p))
        assert abs(dr.expected_entropy(d) - h) < 1e-4

    def test_round_trip(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            true = dr.DirichletParams(np.exp(rng.uniform(np.log(0.2), np.log(50.0), size=rng.integers(2, 8))))
            mean = true.mean
            mi = -np.sum(mean * np.log(mean)) - dr.expected_entropy(true)
            fitted = dr.fit_from_pe_mi(mean, mi)
            assert fitted.alpha0 == pytest.approx(true.alpha0, rel=1e-5)

    def test_constraint_met(self):
        p = np.array([0.1, 0.6, 0.3])
        d = dr.fit_from_pe_mi(p, 0.2)
        assert -np.sum(p * np.log(p)) - dr.expected_entropy(d) == pytest.approx(0.2, abs=1e-8)

    def test_infeasible(self):
        with pytest.raises(InfeasibleMI):
            dr.fit_from_pe_mi([0.5, 0.5], np.log(2.0))
        with pytest.raises(InfeasibleMI):
            dr.fit_from_pe_mi([0.5, 0.5], np.log(2.0) - 1e-9)

    def test_invalid_predictive(self):
        with pytest.raises(InvalidDistribution):
            dr.fit_from_pe_mi([0.5, 0.6], 0.1)


class TestSample:
    def test_mean(self):
        p = dr.sample([2.0, 3.0, 5.0], make_rng(0), N_MC)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        se = p.std(axis=0, ddof=1) / np.sqrt(N_MC)
        assert np.all(np.abs(p.mean(axis=0) - [0.2, 0.3, 0.5]) <= 3 * se)

    def test_concentrated(self):
        assert dr.sample([1e6, 1e6], make_rng(1), 10_000).std(axis=0).max() < 1e-2

    def test_deterministic(self):
        np.testing.assert_array_equal(dr.sample([1.0, 2.0], make_rng(7), 50), dr.sample([1.0, 2.0], make_rng(7), 50))

    def test_monte_carlo_summary(self):
        out = dr.monte_carlo_entropy([1.0, 1.0], make_rng(2), 200_000)
        assert abs(out["mc_mean"] - 0.5) <= 3 * out["mc_mean_se"]
        assert abs(out["mc_var"] - dr.entropy_variance([1.0, 1.0])) <= 3 * out["mc_var_se"]
