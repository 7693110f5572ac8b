import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddu.data import (
    GAUSSIAN_MEANS,
    Dataset,
    ambiguous_pool,
    in_ambiguous_band,
    three_gaussians_label_noise,
    toy_1d,
    two_moons,
    uniform_ood_box,
)
from ddu.exceptions import ExhaustedSampling, InvalidCount, InvalidRate, LengthMismatch


def _brute_arc_distance(points, center, lower_half, resolution=200001):
    t = np.linspace(np.pi, 2 * np.pi, resolution) if lower_half else np.linspace(0.0, np.pi, resolution)
    arc = np.column_stack([np.cos(t), np.sin(t)]) + center
    return np.array([np.min(np.linalg.norm(arc - p, axis=1)) for p in points])


class TestDataset:
    def test_validation(self):
        with pytest.raises(LengthMismatch):
            Dataset(np.zeros((3, 2)), [0, 1])
        with pytest.raises(ValueError):
            Dataset(np.array([[np.nan, 0.0]]), [0])
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 2)), [0, 2], n_classes=2)

    def test_csv_round_trip(self, tmp_path):
        d = three_gaussians_label_noise(50, 0.1, seed=4)
        d.to_csv(tmp_path / "d.csv")
        back = Dataset.from_csv(tmp_path / "d.csv")
        assert back.equals(d)
        header = (tmp_path / "d.csv").read_text().splitlines()[0]
        assert header == "x0,x1,y,ambiguous,split"

    def test_subset_and_concatenate(self):
        d = two_moons(10, 0.1, seed=0)
        parts = [d.subset(np.arange(5)), d.subset(np.arange(5, 10))]
        assert Dataset.concatenate(parts).equals(d)


class TestTwoMoons:
    def test_balance(self):
        d = two_moons(2000, 0.1, seed=0)
        assert np.bincount(d.y).tolist() == [1000, 1000]

    @given(st.integers(2, 301), st.integers(0, 1000))
    def test_balance_property(self, n, seed):
        counts = np.bincount(two_moons(n, 0.1, seed=seed).y, minlength=2)
        assert abs(counts[0] - counts[1]) <= 1

    def test_noiseless_on_arcs(self):
        d = two_moons(4, 0.0, seed=0)
        for x, y in zip(d.x, d.y):
            center = np.array([0.0, 0.0]) if y == 0 else np.array([1.0, 0.5])
            assert np.linalg.norm(x - center) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        a, b = two_moons(1000, 0.1, seed=3), two_moons(1000, 0.1, seed=3)
        assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()

    def test_errors(self):
        with pytest.raises(InvalidCount):
            two_moons(1)
        with pytest.raises(ValueError):
            two_moons(10, noise=-1)


class TestThreeGaussians:
    def test_flag_rate(self):
        d = three_gaussians_label_noise(600, 0.04, seed=0)
        assert d.ambiguous.sum() == 24
        assert d.n_classes == 3

    def test_zero_rate(self):
        assert three_gaussians_label_noise(300, 0.0, seed=1).ambiguous.sum() == 0

    def test_reproducible(self):
        a = three_gaussians_label_noise(300, 0.04, seed=9)
        b = three_gaussians_label_noise(300, 0.04, seed=9)
        assert a.equals(b)

    def test_flagged_labels_differ_from_source(self):
        # clean rows mostly sit nearest their own mean; flagged rows carry another label
        d = three_gaussians_label_noise(3000, 0.1, seed=2)
        clean = ~d.ambiguous
        nearest = np.argmin(np.linalg.norm(d.x[:, None, :] - GAUSSIAN_MEANS[None], axis=2), axis=1)
        assert np.mean(nearest[clean] == d.y[clean]) > 0.95
        assert np.mean(nearest[d.ambiguous] == d.y[d.ambiguous]) < 0.1

    def test_invalid_rate(self):
        with pytest.raises(InvalidRate):
            three_gaussians_label_noise(100, 1.0)
        with pytest.raises(InvalidRate):
            three_gaussians_label_noise(100, -0.1)


class TestAmbiguousPool:
    def test_ratio_and_tags(self):
        d = ambiguous_pool(1000, 60000, seed=0)
        assert len(d) == 61000
        assert d.ambiguous.sum() == 60000
        assert set(d.split) == {"pool"}

    def test_no_ambiguous(self):
        d = ambiguous_pool(200, 0, seed=5)
        ref = two_moons(200, 0.1, seed=5)
        np.testing.assert_array_equal(d.x, ref.x)
        np.testing.assert_array_equal(d.y, ref.y)
        assert set(d.split) == {"pool"}

    def test_label_balance(self):
        labels = np.concatenate([ambiguous_pool(0, 60000, seed=s).y for s in range(10)])
        assert len(labels) >= 600000
        assert abs(np.mean(labels == 0) - 0.5) <= 0.05

    def test_ambiguous_points_in_band(self):
        d = ambiguous_pool(0, 2000, seed=1)
        assert np.all(in_ambiguous_band(d.x))

    def test_band_distance_matches_brute_force(self):
        from ddu.data import _arc_distance

        pts = np.random.default_rng(0).uniform([-1.5, -1.0], [2.5, 1.5], size=(200, 2))
        for center, lower in (((0.0, 0.0), False), ((1.0, 0.5), True)):
            center = np.array(center)
            np.testing.assert_allclose(_arc_distance(pts, center, lower), _brute_arc_distance(pts, center, lower), atol=1e-4)

    def test_label_stream_only_moves_flagged_rows(self):
        a = ambiguous_pool(300, 500, seed=2)
        b = ambiguous_pool(300, 500, seed=2, label_seed=12345)
        np.testing.assert_array_equal(a.x, b.x)
        changed = a.y != b.y
        assert changed.any()
        assert np.all(a.ambiguous[changed])

    def test_negative_counts(self):
        with pytest.raises(InvalidCount):
            ambiguous_pool(-1, 10)


class TestToy1D:
    def test_gap_empty(self):
        d = toy_1d(0)
        assert not np.any(np.abs(d.x[:, 0]) < 2.0)

    def test_band_flagged(self):
        for seed in range(5):
            d = toy_1d(seed)
            a = np.abs(d.x[:, 0])
            in_band = (a >= 3.5) & (a <= 4.5)
            assert np.all(d.ambiguous[in_band])
            assert np.all(in_band[d.ambiguous])

    def test_cluster_labels(self):
        d = toy_1d(1)
        clean = ~d.ambiguous
        np.testing.assert_array_equal(d.y[clean], (d.x[clean, 0] > 0).astype(int))

    def test_deterministic(self):
        assert toy_1d(7).x.tobytes() == toy_1d(7).x.tobytes()


class TestUniformOodBox:
    def test_plain_box(self):
        d = uniform_ood_box(1000, [-1.0, 0.0], [1.0, 2.0], seed=0)
        assert np.all((d.x >= [-1.0, 0.0]) & (d.x <= [1.0, 2.0]))
        assert set(d.split) == {"ood"}

    def test_exhausted(self):
        ex = np.array([[0.0, 0.0]])
        with pytest.raises(ExhaustedSampling):
            uniform_ood_box(10, [-1.0, -1.0], [1.0, 1.0], exclusion=ex, min_dist=5.0, seed=0)

    def test_min_distance_brute_force(self):
        moons = two_moons(2000, 0.1, seed=0)
        d = uniform_ood_box(500, [-3.0, -3.0], [4.0, 3.0], exclusion=moons, min_dist=0.5, seed=1)
        dist = np.sqrt(((d.x[:, None, :] - moons.x[None, :, :]) ** 2).sum(axis=2))
        assert dist.min() >= 0.5

    def test_bad_box(self):
        with pytest.raises(ValueError):
            uniform_ood_box(5, [1.0], [0.0])
