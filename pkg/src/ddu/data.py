"""Seeded synthetic datasets: two moons, label-noisy Gaussians, an ambiguous
pool for active learning, the 1D ensemble toy, and a uniform OoD box."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from sklearn.datasets import make_moons

from .exceptions import ExhaustedSampling, InvalidCount, InvalidRate, LengthMismatch
from .mathcore import make_rng

SPLITS = ("train", "val", "pool", "test", "ood")

# layout of the three-class label-noise toy
GAUSSIAN_MEANS = np.array([[-3.0, 1.0], [3.0, 1.0], [0.0, -5.5]])
GAUSSIAN_COVS = np.array(
    [
        [[2.0, 0.6], [0.6, 1.0]],
        [[2.0, -0.6], [-0.6, 1.0]],
        [[1.0, 0.0], [0.0, 1.5]],
    ]
)

TOY1D_STD = 0.15
AMBIGUOUS_BAND_HALF_WIDTH = 0.25
# ambiguous samples must also stay this close to both arcs ("between" the moons)
AMBIGUOUS_MAX_ARC_DISTANCE = 0.75
MAX_REJECTIONS = 10**6


@dataclass
class Dataset:
    """Feature rows with integer labels, ambiguity flags and split tags."""

    x: np.ndarray
    y: np.ndarray
    ambiguous: np.ndarray = None
    split: np.ndarray = None
    n_classes: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        n = self.x.shape[0]
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.ambiguous is None:
            self.ambiguous = np.zeros(n, dtype=bool)
        self.ambiguous = np.asarray(self.ambiguous, dtype=bool).reshape(-1)
        if self.split is None:
            self.split = np.full(n, "train", dtype=object)
        elif isinstance(self.split, str):
            self.split = np.full(n, self.split, dtype=object)
        self.split = np.asarray(self.split, dtype=object).reshape(-1)
        if not (len(self.y) == len(self.ambiguous) == len(self.split) == n):
            raise LengthMismatch("x, y, ambiguous and split must have the same length")
        if np.isnan(self.x).any():
            raise ValueError("features contain NaN")
        if self.n_classes is None:
            self.n_classes = int(self.y.max()) + 1 if n else 0
        if n and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")

    def __len__(self):
        return self.x.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    def subset(self, index):
        return Dataset(
            self.x[index], self.y[index], self.ambiguous[index], self.split[index],
            n_classes=self.n_classes, meta=dict(self.meta),
        )

    def with_split(self, tag):
        return Dataset(self.x, self.y, self.ambiguous, tag, n_classes=self.n_classes, meta=dict(self.meta))

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        return cls(
            np.vstack([p.x for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.ambiguous for p in parts]),
            np.concatenate([p.split for p in parts]),
            n_classes=max(p.n_classes for p in parts),
        )

    def equals(self, other):
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.ambiguous, other.ambiguous)
            and np.array_equal(self.split, other.split)
        )

    def to_csv(self, path):
        """Write ``x0,...,x{d-1},y,ambiguous,split`` rows, floats at 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{j}" for j in range(self.n_features)] + ["y", "ambiguous", "split"])
            for row, label, amb, tag in zip(self.x, self.y, self.ambiguous, self.split):
                writer.writerow([f"{v:.17g}" for v in row] + [int(label), int(amb), tag])

    @classmethod
    def from_csv(cls, path, n_classes=None):
        """Read a dataset CSV; ``y``, ``ambiguous`` and ``split`` columns are optional."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty file")
            rows = list(reader)
        feat_cols = [j for j, h in enumerate(header) if h.startswith("x")]
        col = {h: j for j, h in enumerate(header)}
        d = len(feat_cols)
        x = np.array([[float(r[j]) for j in feat_cols] for r in rows], dtype=float).reshape(len(rows), d)
        y = np.array([int(r[col["y"]]) for r in rows] if "y" in col else np.zeros(len(rows)), dtype=np.int64)
        amb = np.array([r[col["ambiguous"]] in ("1", "True", "true") for r in rows] if "ambiguous" in col else np.zeros(len(rows)), dtype=bool)
        split = np.array([r[col["split"]] for r in rows] if "split" in col else ["test"] * len(rows), dtype=object)
        return cls(x, y, amb, split, n_classes=n_classes if n_classes is not None else (int(y.max()) + 1 if len(y) else 0))


def two_moons(n, noise=0.1, seed=0, split="train"):
    """Two interleaving half circles with Gaussian coordinate noise."""
    if n < 2:
        raise InvalidCount(f"two_moons needs n >= 2, got {n}")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    x, y = make_moons(n_samples=n, noise=noise if noise > 0 else None, random_state=seed, shuffle=True)
    return Dataset(x, y, split=split, n_classes=2)


def three_gaussians_label_noise(n, noise_rate=0.04, seed=0, split="train"):
    """Three fixed 2D Gaussians with a fraction of labels resampled.

    Exactly ``round(noise_rate * n)`` rows get a label drawn uniformly from
    the two other classes; those rows are flagged ambiguous.
    """
    if not 0 <= noise_rate < 1:
        raise InvalidRate(f"noise_rate must lie in [0, 1), got {noise_rate}")
    if n < 3:
        raise InvalidCount("three_gaussians_label_noise needs n >= 3")
    rng = make_rng(seed)
    true = np.arange(n) % 3
    x = np.empty((n, 2))
    for c in range(3):
        idx = np.flatnonzero(true == c)
        x[idx] = rng.multivariate_normal(GAUSSIAN_MEANS[c], GAUSSIAN_COVS[c], size=len(idx), method="cholesky")
    n_noisy = int(round(noise_rate * n))
    noisy = rng.permutation(n)[:n_noisy]
    y = true.copy()
    y[noisy] = (true[noisy] + rng.integers(1, 3, size=n_noisy)) % 3
    amb = np.zeros(n, dtype=bool)
    amb[noisy] = True
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm], amb[perm], split=split, n_classes=3)


def _arc_distance(points, center, lower_half):
    """Euclidean distance to a unit half circle around ``center``."""
    rel = points - center
    on_side = rel[:, 1] <= 0 if lower_half else rel[:, 1] >= 0
    radial = np.abs(np.hypot(rel[:, 0], rel[:, 1]) - 1.0)
    ends = np.array([[1.0, 0.0], [-1.0, 0.0]])
    to_ends = np.min(np.linalg.norm(rel[:, None, :] - ends[None], axis=2), axis=1)
    return np.where(on_side, radial, to_ends)


def in_ambiguous_band(points):
    """Mask of points lying in the overlap band between the two moon arcs."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d_out = _arc_distance(points, np.array([0.0, 0.0]), lower_half=False)
    d_in = _arc_distance(points, np.array([1.0, 0.5]), lower_half=True)
    # |d_out - d_in| / 2 approximates the distance to the equidistant curve
    return (np.abs(d_out - d_in) <= 2 * AMBIGUOUS_BAND_HALF_WIDTH) & (
        np.maximum(d_out, d_in) <= AMBIGUOUS_MAX_ARC_DISTANCE
    )


def ambiguous_pool(n_clean, n_ambiguous, seed=0, label_seed=None):
    """Clean two-moons points plus ambiguous points from the inter-moon band.

    Ambiguous labels are fair coin flips drawn from a separate stream;
    ``label_seed`` overrides that stream without moving any point.
    """
    if n_clean < 0 or n_ambiguous < 0:
        raise InvalidCount("counts must be non-negative")
    seq = np.random.SeedSequence(seed)
    pos_seq, lab_seq = seq.spawn(2)
    parts = []
    if n_clean > 0:
        if n_clean < 2:
            raise InvalidCount("n_clean must be 0 or >= 2")
        parts.append(two_moons(n_clean, noise=0.1, seed=seed, split="pool"))
    if n_ambiguous > 0:
        rng = np.random.Generator(np.random.PCG64(pos_seq))
        lab_rng = np.random.Generator(np.random.PCG64(lab_seq if label_seed is None else label_seed))
        lo, hi = np.array([-1.5, -1.0]), np.array([2.5, 1.5])
        accepted = []
        total, tries = 0, 0
        while total < n_ambiguous:
            cand = rng.uniform(lo, hi, size=(max(4 * (n_ambiguous - total), 256), 2))
            tries += len(cand)
            keep = cand[in_ambiguous_band(cand)]
            accepted.append(keep)
            total += len(keep)
            if tries > MAX_REJECTIONS * 10 and total == 0:
                raise ExhaustedSampling("ambiguous band is empty")
        xa = np.vstack(accepted)[:n_ambiguous]
        ya = (lab_rng.random(n_ambiguous) < 0.5).astype(np.int64)
        parts.append(Dataset(xa, ya, np.ones(n_ambiguous, dtype=bool), "pool", n_classes=2))
    if not parts:
        return Dataset(np.zeros((0, 2)), np.zeros(0), split="pool", n_classes=2)
    return Dataset.concatenate(parts)


def _truncated_cluster(rng, center, n, forbidden):
    out = np.empty(0)
    while len(out) < n:
        cand = rng.normal(center, TOY1D_STD, size=2 * n)
        out = np.concatenate([out, cand[~forbidden(cand)]])
    return out[:n]


def toy_1d(seed=0, n_per_cluster=50, n_per_band=40):
    """1D binary data: clusters near +-3 and +-5, ambiguous bands at |x| in [3.5, 4.5].

    Negative inputs belong to class 0, positive ones to class 1; the band
    labels are coin flips. Nothing is generated in (-2, 2).
    """
    rng = make_rng(seed)

    def forbidden(v):
        a = np.abs(v)
        return (a < 2.0) | ((a >= 3.5) & (a <= 4.5))

    xs, ys, amb = [], [], []
    for sign, label in ((-1.0, 0), (1.0, 1)):
        for center in (3.0, 5.0):
            pts = _truncated_cluster(rng, sign * center, n_per_cluster, forbidden)
            xs.append(pts)
            ys.append(np.full(n_per_cluster, label))
            amb.append(np.zeros(n_per_cluster, dtype=bool))
        band = sign * rng.uniform(3.5, 4.5, size=n_per_band)
        xs.append(band)
        ys.append((rng.random(n_per_band) < 0.5).astype(np.int64))
        amb.append(np.ones(n_per_band, dtype=bool))
    x = np.concatenate(xs)
    order = np.argsort(x, kind="stable")
    return Dataset(x[order, None], np.concatenate(ys)[order], np.concatenate(amb)[order], n_classes=2)


def uniform_ood_box(n, lo, hi, exclusion=None, min_dist=0.0, seed=0):
    """Uniform points in a box, each at least ``min_dist`` from every exclusion row."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or np.any(lo >= hi):
        raise ValueError("need lo < hi elementwise")
    if min_dist < 0:
        raise ValueError("min_dist must be non-negative")
    if n < 0:
        raise InvalidCount("n must be non-negative")
    rng = make_rng(seed)
    d = len(lo)
    if exclusion is None or len(exclusion) == 0 or min_dist == 0:
        x = rng.uniform(lo, hi, size=(n, d))
        return Dataset(x, np.zeros(n, dtype=np.int64), split="ood", n_classes=1)
    ex = exclusion.x if isinstance(exclusion, Dataset) else np.asarray(exclusion, dtype=float)
    tree = cKDTree(ex)
    accepted, total, rejected = [], 0, 0
    while total < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - total), 64), d))
        dist, _ = tree.query(cand)
        ok = dist >= min_dist
        rejected += int((~ok).sum())
        if rejected >= MAX_REJECTIONS and total + ok.sum() < n:
            raise ExhaustedSampling(f"rejection sampling failed {rejected} times")
        accepted.append(cand[ok])
        total += int(ok.sum())
    x = np.vstack(accepted)[:n]
    return Dataset(x, np.zeros(n, dtype=np.int64), split="ood", n_classes=1)
