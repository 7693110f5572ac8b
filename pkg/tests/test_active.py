import numpy as np
import pytest

from ddu import active
from ddu.active import Acquisition, AlConfig, AlCurve
from ddu.data import ambiguous_pool, two_moons
from ddu.exceptions import InvalidCount, MissingGda, PoolExhausted
from ddu.gda import GaussianDiscriminantAnalysis
from ddu.net import ResidualMLPClassifier

TINY = dict(width=16, num_residual_blocks=1, epochs=10, batch_size=32, lr=3e-3)


@pytest.fixture(scope="module")
def pool():
    return ambiguous_pool(200, 200, seed=0)


@pytest.fixture(scope="module")
def test_set():
    return two_moons(200, 0.1, seed=1, split="test")


@pytest.fixture(scope="module")
def models(pool):
    clean = ~pool.ambiguous
    return [
        ResidualMLPClassifier(**TINY, n_classes=2, random_state=m).fit(pool.x[clean], pool.y[clean]) for m in range(3)
    ]


class TestConfig:
    def test_defaults(self):
        cfg = AlConfig()
        assert (cfg.initial_size, cfg.acquisition_size, cfg.budget) == (20, 5, 300)
        assert cfg.to_dict()["acquisition"] == "NegLogDensity"

    @pytest.mark.parametrize("kw", [{"acquisition_size": 0}, {"budget": 10}, {"ensemble_size": 0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidCount):
            AlConfig(**kw)

    def test_unknown_acquisition(self):
        with pytest.raises(ValueError):
            AlConfig(acquisition="BALD")


class TestScores:
    def test_missing_gda(self, models, pool):
        with pytest.raises(MissingGda):
            active.acquisition_scores(models, None, pool.x, "NegLogDensity")

    def test_neg_log_density(self, models, pool):
        clean = ~pool.ambiguous
        gda = GaussianDiscriminantAnalysis(n_classes=2).fit(models[0].transform(pool.x[clean]), pool.y[clean])
        s = active.acquisition_scores(models, gda, pool.x, Acquisition.NEG_LOG_DENSITY)
        np.testing.assert_array_equal(s, -gda.score_samples(models[0].transform(pool.x)))

    def test_single_member_ensemble_is_softmax_entropy(self, models, pool):
        pe = active.acquisition_scores(models[:1], None, pool.x, "EnsemblePE")
        se = active.acquisition_scores(models[:1], None, pool.x, "SoftmaxEntropy")
        np.testing.assert_allclose(pe, se, atol=1e-12)
        mi = active.acquisition_scores(models[:1], None, pool.x, "EnsembleMI")
        np.testing.assert_allclose(mi, 0.0, atol=1e-12)

    def test_mutual_information_non_negative(self, models, pool):
        assert np.all(active.acquisition_scores(models, None, pool.x, "EnsembleMI") >= -1e-12)

    def test_random_needs_rng(self, models, pool):
        with pytest.raises(ValueError):
            active.acquisition_scores(models, None, pool.x, "Random")
        s = active.acquisition_scores(models, None, pool.x, "Random", np.random.default_rng(0))
        assert s.shape == (len(pool),)


class TestTopIndices:
    def test_ties_lowest_index(self):
        np.testing.assert_array_equal(active.top_indices([1.0, 3.0, 3.0, 2.0, 3.0], 2), [1, 2])

    def test_order(self):
        np.testing.assert_array_equal(active.top_indices([0.1, 0.5, 0.3], 3), [1, 2, 0])


@pytest.fixture(scope="module")
def curve(pool, test_set):
    cfg = AlConfig(initial_size=10, acquisition_size=7, budget=40, retrain=TINY, acquisition="SoftmaxEntropy")
    return active.run(pool, test_set, cfg)


class TestRun:
    def test_monotone_and_unique(self, curve, pool):
        assert np.all(np.diff(curve.labeled) > 0)
        flat = [i for a in curve.acquired for i in a]
        assert len(flat) == len(set(flat)) == curve.labeled[-1] == 40

    def test_budget_respected(self, curve):
        # 10 + 4 * 7 = 38, then a final partial batch of 2
        assert curve.labeled == [10, 17, 24, 31, 38, 40]

    def test_initial_set_clean_and_covers_classes(self, curve, pool):
        init = np.array(curve.acquired[0])
        assert not pool.ambiguous[init].any()
        assert np.bincount(pool.y[init], minlength=2).min() >= 2

    def test_ambiguous_counts(self, curve, pool):
        for picked, n in zip(curve.acquired, curve.ambiguous_acquired):
            assert pool.ambiguous[picked].sum() == n

    def test_deterministic(self, curve, pool, test_set):
        cfg = AlConfig(initial_size=10, acquisition_size=7, budget=40, retrain=TINY, acquisition="SoftmaxEntropy")
        again = active.run(pool, test_set, cfg)
        assert again.acquired == curve.acquired and again.accuracy == curve.accuracy

    def test_pool_too_small(self, test_set):
        small = ambiguous_pool(30, 0, seed=0)
        with pytest.raises(PoolExhausted):
            active.run(small, test_set, AlConfig(initial_size=10, budget=40, retrain=TINY))

    def test_csv(self, curve, tmp_path):
        path = tmp_path / "curve.csv"
        curve.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,labeled,accuracy,ambiguous_acquired"
        assert len(lines) == len(curve) + 1


class TestCurve:
    def test_ambiguous_fraction_excludes_initial(self):
        c = AlCurve([4, 6, 8], [0.5, 0.6, 0.7], [[0, 1, 2, 3], [4, 5], [6, 7]], [3, 1, 0])
        assert c.ambiguous_fraction() == pytest.approx(0.25)

    def test_labels_to_reach(self):
        c = AlCurve([4, 6, 8], [0.5, 0.7, 0.6], [], [])
        assert c.labels_to_reach(0.65) == 6
        assert c.labels_to_reach(0.9) is None


class TestGrowingData:
    def test_nested_sizes(self):
        pool = two_moons(400, 0.2, seed=0)
        test = two_moons(100, 0.2, seed=1, split="test")
        pts = active.growing_data(pool, test, (0.25, 0.5, 1.0), TINY, seed=0)
        assert [p.n_train for p in pts] == [100, 200, 400]
        assert all(np.isfinite(p.mean_log_density) and p.mean_entropy >= 0 for p in pts)

    def test_holds(self):
        mk = lambda d, h: active.GrowthPoint(0.1, 1, d, h)
        assert active.growth_holds([mk(1.0, 0.1), mk(2.0, 0.12), mk(3.0, 0.1)])
        assert not active.growth_holds([mk(1.0, 0.1), mk(1.0, 0.1), mk(3.0, 0.1)])
        assert not active.growth_holds([mk(1.0, 0.05), mk(2.0, 0.1), mk(3.0, 0.1)])
