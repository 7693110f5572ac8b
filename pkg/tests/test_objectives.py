import csv

import numpy as np
import pytest

from ddu import gda
from ddu import objectives as ob
from ddu.data import Dataset, three_gaussians_label_noise
from ddu.exceptions import DegenerateComponent
from ddu.uncertainty import entropy


def separated(n_per=200, gap=100.0, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [gap, 0.0], [0.0, gap]])
    x = np.concatenate([c + rng.normal(size=(n_per, 2)) @ np.array([[1.0, 0.3], [0.0, 0.8]]) for c in centers])
    y = np.repeat(np.arange(3), n_per)
    return Dataset(x, y, n_classes=3)


@pytest.fixture(scope="module")
def noisy():
    return three_gaussians_label_noise(600, 0.04, seed=0)


@pytest.fixture(scope="module")
def table(noisy):
    return ob.objective_table(noisy, seed=0)


def star_entropy(params):
    return float(entropy(ob.class_posterior(params, ob.STAR_POINT[None])[0]))


class TestParameterisation:
    def test_raw_round_trip(self, noisy):
        p = ob.fit_joint(noisy)
        back = ob.RawGmm.from_flat(p.to_raw().flat(), p.n_components, p.dim).to_params()
        np.testing.assert_allclose(back.means, p.means)
        np.testing.assert_allclose(back.chols, p.chols, rtol=1e-12)
        np.testing.assert_allclose(back.log_weights, p.log_weights, atol=1e-12)

    def test_joint_log_prob_matches_scipy(self, noisy):
        from scipy.stats import multivariate_normal

        p = ob.fit_joint(noisy)
        z = noisy.x[:20]
        ref = np.stack(
            [multivariate_normal(p.means[c], p.covariances[c]).logpdf(z) + p.log_weights[c] for c in range(3)], axis=1
        )
        np.testing.assert_allclose(ob.joint_log_prob(p, z), ref, rtol=1e-10)


class TestConditional:
    def test_gradient_finite_difference(self, noisy):
        raw = ob.fit_joint(noisy).to_raw()
        rng = np.random.default_rng(1)
        theta = raw.flat() + 0.05 * rng.normal(size=raw.flat().size)
        k, d = 3, 2
        _, g = ob.conditional_nll_grad(ob.RawGmm.from_flat(theta, k, d), noisy.x, noisy.y)
        g = g.flat()
        h = 1e-6
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            up, _ = ob.conditional_nll_grad(ob.RawGmm.from_flat(theta + e, k, d), noisy.x, noisy.y)
            dn, _ = ob.conditional_nll_grad(ob.RawGmm.from_flat(theta - e, k, d), noisy.x, noisy.y)
            fd = (up - dn) / (2 * h)
            assert abs(fd - g[i]) <= 1e-4 * max(1.0, abs(fd)), i

    def test_single_class_is_zero(self):
        rng = np.random.default_rng(2)
        data = Dataset(rng.normal(size=(50, 2)), np.zeros(50, dtype=np.int64), n_classes=1)
        assert ob.score(ob.fit_joint(data), data).cond_nll == pytest.approx(0.0, abs=1e-12)

    def test_trace_non_increasing(self, noisy):
        trace = ob.fit_conditional(noisy, max_iter=300).trace
        assert np.all(np.diff(trace) <= 0)

    def test_improves_on_joint(self, table):
        _, scores = table
        assert scores["min H(Y|Z)"].cond_nll < scores["min H(Y,Z)"].cond_nll

    def test_separated_stays_put(self):
        data = separated()
        start = ob.fit_joint(data)
        fit = ob.fit_conditional(data, init=start)
        assert ob.score(fit.params, data).cond_nll < 1e-6
        assert ob.score(start, data).cond_nll < 1e-6

    def test_missing_class(self):
        data = Dataset(np.zeros((4, 2)), np.array([0, 0, 1, 1]), n_classes=3)
        with pytest.raises(ValueError):
            ob.fit_conditional(data)


class TestJoint:
    def test_equals_gda(self, noisy):
        p = ob.fit_joint(noisy)
        model = gda.fit(noisy.x, noisy.y, 3)
        np.testing.assert_array_equal(p.means, model.means)
        np.testing.assert_array_equal(p.chols, np.stack([c.lower for c in model.cov_chols]))
        np.testing.assert_array_equal(p.log_weights, model.log_priors)

    def test_label_permutation(self, noisy):
        perm = np.array([2, 0, 1])
        permuted = Dataset(noisy.x, perm[noisy.y], n_classes=3)
        a, b = ob.fit_joint(noisy), ob.fit_joint(permuted)
        np.testing.assert_allclose(b.means[perm], a.means, rtol=1e-12)
        np.testing.assert_allclose(b.log_weights[perm], a.log_weights, rtol=1e-12)

    def test_decomposition(self, table, noisy):
        fits, _ = table
        for params in fits.values():
            s = ob.score(params, noisy)
            assert s.joint_nll == pytest.approx(s.cond_nll + s.marginal_nll, abs=1e-8)


class TestMarginal:
    def test_single_component(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=(400, 2)) @ np.array([[2.0, 0.5], [0.0, 1.0]]) + [1.0, -2.0]
        data = Dataset(z, np.zeros(400, dtype=np.int64), n_classes=1)
        fit = ob.fit_marginal_em(data)
        np.testing.assert_allclose(fit.params.means[0], z.mean(axis=0), atol=1e-10)
        np.testing.assert_allclose(fit.params.covariances[0], np.cov(z.T, bias=True), atol=1e-10)

    def test_monotone(self, noisy):
        trace = ob.fit_marginal_em(noisy, seed=0).trace
        assert np.all(np.diff(trace) <= 1e-10)

    def test_degenerate(self):
        z = np.concatenate([np.zeros((30, 2)), np.random.default_rng(0).normal(size=(30, 2))])
        init = ob.GmmParams(
            np.array([[1e3, 1e3], [0.0, 0.0]]), np.stack([np.eye(2) * 1e-3, np.eye(2)]), np.log([0.5, 0.5])
        )
        with pytest.raises(DegenerateComponent):
            ob.fit_marginal_em(Dataset(z, np.zeros(60, dtype=np.int64), n_classes=2), init=init)


class TestTable:
    def test_diagonal_dominance(self, table):
        assert ob.diagonal_dominance(table[1])

    def test_marginal_row_unsupervised(self, table):
        s = table[1]["min H(Z)"]
        assert not s.supervised and s.cond_nll is None and s.joint_nll is None

    def test_write(self, table, tmp_path):
        path = tmp_path / "scores.csv"
        ob.write_table(table[1], path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["objective", "H(Y|Z)", "H(Y,Z)", "H(Z)"]
        assert rows[3][:3] == ["min H(Z)", "n/a", "n/a"]
        assert float(rows[3][3]) == table[1]["min H(Z)"].marginal_nll

    def test_separated_fits_coincide(self):
        data = separated()
        fits, _ = ob.objective_table(data)
        rows = [ob.score(p, data) for p in fits.values()]
        for attr in ("cond_nll", "joint_nll", "marginal_nll"):
            vals = [getattr(r, attr) for r in rows]
            assert max(vals) - min(vals) < 1e-4, attr


@pytest.mark.slow
class TestStarPoint:
    def test_conditional_ambiguous_joint_confident(self):
        # the star point was placed using seeds 0-4, so the check runs on fresh seeds
        cond, joint = [], []
        for seed in range(5, 10):
            data = three_gaussians_label_noise(600, 0.04, seed=seed)
            j = ob.fit_joint(data)
            cond.append(star_entropy(ob.fit_conditional(data, init=j).params))
            joint.append(star_entropy(j))
        assert np.mean(cond) > 0.5 and np.mean(joint) < 0.1
