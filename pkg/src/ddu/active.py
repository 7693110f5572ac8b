"""Pool-based active learning with interchangeable acquisition functions.

Each round a fresh network (or ensemble) is trained on the labeled rows,
test accuracy is recorded, every unlabeled pool row is scored, and the
highest scorers are moved to the labeled set.
"""

import csv
import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import InvalidCount, MissingGda, PoolExhausted
from .gda import GaussianDiscriminantAnalysis
from .mathcore import make_rng
from .net import ResidualMLPClassifier
from .uncertainty import decompose, entropy


class Acquisition(str, enum.Enum):
    SOFTMAX_ENTROPY = "SoftmaxEntropy"
    NEG_LOG_DENSITY = "NegLogDensity"
    ENSEMBLE_PE = "EnsemblePE"
    ENSEMBLE_MI = "EnsembleMI"
    RANDOM = "Random"

    @property
    def is_ensemble(self):
        return self in (Acquisition.ENSEMBLE_PE, Acquisition.ENSEMBLE_MI)


# small network: rounds retrain from scratch, so per-round cost dominates
DEFAULT_RETRAIN = {
    "width": 64,
    "num_residual_blocks": 2,
    "epochs": 100,
    "batch_size": 64,
    "lr": 3e-3,
}


@dataclass
class AlConfig:
    initial_size: int = 20
    acquisition_size: int = 5
    budget: int = 300
    retrain: dict = field(default_factory=lambda: dict(DEFAULT_RETRAIN))
    acquisition: Acquisition = Acquisition.NEG_LOG_DENSITY
    ensemble_size: int = 5
    seed: int = 0

    def __post_init__(self):
        self.acquisition = Acquisition(self.acquisition)
        if self.acquisition_size < 1:
            raise InvalidCount("acquisition_size must be >= 1")
        if self.budget < self.initial_size:
            raise InvalidCount("budget must be >= initial_size")
        if self.ensemble_size < 1:
            raise InvalidCount("ensemble_size must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["acquisition"] = self.acquisition.value
        return d


@dataclass
class AlCurve:
    labeled: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    acquired: list = field(default_factory=list)
    ambiguous_acquired: list = field(default_factory=list)

    def __len__(self):
        return len(self.labeled)

    def ambiguous_fraction(self):
        """Cumulative fraction of acquired (non-initial) rows that were ambiguous."""
        n = sum(len(a) for a in self.acquired[1:])
        return sum(self.ambiguous_acquired[1:]) / n if n else 0.0

    def labels_to_reach(self, target):
        """Smallest labeled count whose accuracy is at least ``target``; None if never."""
        for n, acc in zip(self.labeled, self.accuracy):
            if acc >= target:
                return n
        return None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "labeled", "accuracy", "ambiguous_acquired"])
            for step, (n, acc, amb) in enumerate(zip(self.labeled, self.accuracy, self.ambiguous_acquired)):
                writer.writerow([step, n, f"{acc:.17g}", amb])


def member_seed(seed, round_index, member):
    return int(np.random.SeedSequence([seed, round_index, member]).generate_state(1)[0])


def acquisition_scores(models, gda, pool_x, kind, rng=None):
    """Score pool rows; higher means acquired first.

    Parameters
    ----------
    models : list of fitted classifiers
        One model for single-network scores, the members for ensemble scores.
    gda : GaussianDiscriminantAnalysis or None
        Required for ``NegLogDensity``; fitted on the first model's features.
    pool_x : ndarray of shape (n, d)
    kind : Acquisition or str
    rng : numpy Generator, optional
        Source of ``Random`` scores.
    """
    kind = Acquisition(kind)
    pool_x = np.asarray(pool_x, dtype=float)
    if kind is Acquisition.RANDOM:
        if rng is None:
            raise ValueError("Random acquisition needs an rng")
        return rng.random(len(pool_x))
    if kind is Acquisition.NEG_LOG_DENSITY:
        if gda is None:
            raise MissingGda("NegLogDensity needs a fitted GDA model")
        return -gda.score_samples(models[0].transform(pool_x))
    if kind is Acquisition.SOFTMAX_ENTROPY:
        return entropy(models[0].predict_proba(pool_x))
    members = np.stack([m.predict_proba(pool_x) for m in models], axis=1)
    dec = decompose(members)
    return dec.predictive_entropy if kind is Acquisition.ENSEMBLE_PE else dec.mutual_information


def top_indices(scores, k):
    """Positions of the ``k`` largest scores, ties going to the lowest position."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return order[:k]


def _initial_indices(pool, cfg, rng):
    clean = np.flatnonzero(~pool.ambiguous)
    if len(clean) < cfg.initial_size:
        raise PoolExhausted("not enough clean pool rows for the initial set")
    for _ in range(1000):
        pick = np.sort(rng.choice(clean, size=cfg.initial_size, replace=False))
        counts = np.bincount(pool.y[pick], minlength=pool.n_classes)
        if counts.min() >= 2:
            return pick
    raise PoolExhausted("could not draw an initial set covering every class")


def run(pool, test, cfg):
    """Run one acquisition loop until ``cfg.budget`` rows are labeled."""
    if len(pool) < cfg.budget:
        raise PoolExhausted(f"pool has {len(pool)} rows, budget is {cfg.budget}")
    k = pool.n_classes
    if cfg.initial_size < k:
        raise InvalidCount("initial_size must be at least the number of classes")
    rng = make_rng([cfg.seed, 2])
    labeled = _initial_indices(pool, cfg, rng)
    is_labeled = np.zeros(len(pool), dtype=bool)
    is_labeled[labeled] = True
    curve = AlCurve()
    curve.acquired.append(labeled.tolist())
    curve.ambiguous_acquired.append(int(pool.ambiguous[labeled].sum()))
    n_members = cfg.ensemble_size if cfg.acquisition.is_ensemble else 1
    round_index = 0
    while True:
        x_l, y_l = pool.x[is_labeled], pool.y[is_labeled]
        models = [
            ResidualMLPClassifier(**cfg.retrain, n_classes=k, random_state=member_seed(cfg.seed, round_index, m)).fit(x_l, y_l)
            for m in range(n_members)
        ]
        curve.labeled.append(int(is_labeled.sum()))
        curve.accuracy.append(float(np.mean(models[0].predict(test.x) == test.y)))
        remaining = cfg.budget - curve.labeled[-1]
        if remaining <= 0:
            break
        gda = None
        if cfg.acquisition is Acquisition.NEG_LOG_DENSITY:
            gda = GaussianDiscriminantAnalysis(n_classes=k).fit(models[0].transform(x_l), y_l)
        unlabeled = np.flatnonzero(~is_labeled)
        scores = acquisition_scores(models, gda, pool.x[unlabeled], cfg.acquisition, rng)
        picked = unlabeled[top_indices(scores, min(cfg.acquisition_size, remaining))]
        is_labeled[picked] = True
        curve.acquired.append(picked.tolist())
        curve.ambiguous_acquired.append(int(pool.ambiguous[picked].sum()))
        round_index += 1
    return curve


@dataclass
class GrowthPoint:
    fraction: float
    n_train: int
    mean_log_density: float
    mean_entropy: float


def growing_data(pool, test, fractions=(0.1, 0.2, 1.0), retrain=None, seed=0):
    """Retrain on nested subsets of ``pool`` and summarise test uncertainty.

    Subsets are prefixes of one seeded permutation, so each contains the
    smaller ones. For each, a fresh network is trained, GDA is fitted on its
    training features and the mean test log-density and softmax entropy are
    recorded.
    """
    retrain = dict(DEFAULT_RETRAIN if retrain is None else retrain)
    perm = make_rng([seed, 3]).permutation(len(pool))
    points = []
    for frac in fractions:
        if not 0 < frac <= 1:
            raise ValueError("fractions must lie in (0, 1]")
        idx = perm[: max(int(round(frac * len(pool))), pool.n_classes)]
        x, y = pool.x[idx], pool.y[idx]
        model = ResidualMLPClassifier(**retrain, n_classes=pool.n_classes, random_state=seed).fit(x, y)
        density = GaussianDiscriminantAnalysis(n_classes=pool.n_classes).fit(model.transform(x), y)
        points.append(GrowthPoint(
            float(frac),
            len(idx),
            float(np.mean(density.score_samples(model.transform(test.x)))),
            float(np.mean(entropy(model.predict_proba(test.x)))),
        ))
    return points


def growth_holds(points, max_relative_change=0.5):
    """Density strictly rises with data while entropy stays within the relative band.

    Entropy variation is the range over the mean across all subset sizes.
    """
    dens = np.array([p.mean_log_density for p in points])
    ent = np.array([p.mean_entropy for p in points])
    rising = bool(np.all(np.diff(dens) > 0))
    spread = (ent.max() - ent.min()) / ent.mean() if ent.mean() > 0 else 0.0
    return rising and bool(spread < max_relative_change)
