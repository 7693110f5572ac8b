"""Entropy-based uncertainty measures, the ensemble decomposition, temperature
scaling, density/entropy thresholds and the OoD / ambiguous / clean verdict."""

import enum
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import EmptyInput, EmptyValidation, InvalidDistribution, PreconditionViolated
from .net import log_softmax, softmax

_PROB_TOL = 1e-8
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _check_probs(p):
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise InvalidDistribution("empty probability vector")
    if np.any(p < -_PROB_TOL) or np.any(np.abs(p.sum(axis=-1) - 1.0) > _PROB_TOL) or not np.all(np.isfinite(p)):
        raise InvalidDistribution("not a probability vector")
    return np.clip(p, 0.0, None)


def _entropy_unchecked(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(terms, axis=-1)


def entropy(p):
    """Shannon entropy in nats along the last axis, with ``0 log 0 = 0``."""
    return _entropy_unchecked(_check_probs(p))


@dataclass(frozen=True)
class Decomposition:
    predictive_entropy: np.ndarray
    mutual_information: np.ndarray
    expected_entropy: np.ndarray


def decompose(member_probs):
    """Split ensemble predictive entropy into mutual information and expected entropy.

    ``member_probs`` has shape (M, K) for one input or (N, M, K) for a batch.
    """
    p = _check_probs(member_probs)
    if p.ndim < 2:
        raise InvalidDistribution("expected member probabilities of shape (M, K)")
    pe = _entropy_unchecked(p.mean(axis=-2))
    expected = _entropy_unchecked(p).mean(axis=-1)
    return Decomposition(pe, pe - expected, expected)


def temperature_nll(logits, labels, temperature):
    lp = log_softmax(np.asarray(logits, dtype=float) / temperature)
    return float(-np.mean(lp[np.arange(len(labels)), labels]))


def fit_temperature(logits, labels, lo=0.05, hi=20.0, tol=1e-4):
    """Temperature minimising validation NLL, by golden-section search on ``[lo, hi]``.

    Falls back to a 400-point grid scan when the golden-section result is
    beaten by either end of the interval (NLL not unimodal there).
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or len(logits) == 0:
        raise EmptyValidation("need a non-empty (n, K) logit matrix")

    def nll(t):
        return temperature_nll(logits, labels, t)

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = nll(c), nll(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = nll(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = nll(d)
    t_best = 0.5 * (a + b)
    f_best = nll(t_best)
    if min(nll(lo), nll(hi)) < f_best:
        grid = np.linspace(lo, hi, 400)
        vals = np.array([nll(t) for t in grid])
        t_best = float(grid[np.argmin(vals)])
    return float(t_best)


class TemperatureScaler(TransformerMixin, BaseEstimator):
    """Post-hoc temperature scaling of logits.

    ``fit`` takes validation logits and labels; ``transform`` divides logits
    by the fitted temperature and ``predict_proba`` applies the softmax.
    """

    def __init__(self, lo=0.05, hi=20.0, tol=1e-4):
        self.lo = lo
        self.hi = hi
        self.tol = tol

    def fit(self, logits, y):
        logits = check_array(logits, dtype=np.float64)
        self.temperature_ = fit_temperature(logits, y, self.lo, self.hi, self.tol)
        return self

    def transform(self, logits):
        check_is_fitted(self, "temperature_")
        return check_array(logits, dtype=np.float64) / self.temperature_

    def predict_proba(self, logits):
        return softmax(self.transform(logits))


@dataclass(frozen=True)
class Thresholds:
    density_log_threshold: float
    entropy_threshold: float

    def to_dict(self):
        return {"density_log_threshold": self.density_log_threshold, "entropy_threshold": self.entropy_threshold}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["density_log_threshold"]), float(d["entropy_threshold"]))


def compute_thresholds(train_log_densities, train_entropies, density_quantile=0.01, entropy_quantile=0.95):
    """Thresholds from in-distribution training statistics.

    The density threshold is the lower ``density_quantile`` of training
    log-densities, so that fraction of training points would be called OoD.
    Quantiles interpolate linearly between order statistics.
    """
    dens = np.asarray(train_log_densities, dtype=float)
    ent = np.asarray(train_entropies, dtype=float)
    if dens.size == 0 or ent.size == 0:
        raise EmptyInput("thresholds need non-empty training statistics")
    for q in (density_quantile, entropy_quantile):
        if not 0 < q < 1:
            raise ValueError("quantiles must lie in (0, 1)")
    return Thresholds(float(np.quantile(dens, density_quantile)), float(np.quantile(ent, entropy_quantile)))


class Verdict(str, enum.Enum):
    OOD = "OoD"
    AMBIGUOUS_ID = "AmbiguousID"
    UNAMBIGUOUS_ID = "UnambiguousID"

    # numpy compares object arrays against str(member); keep that equal to the value
    def __str__(self):
        return self.value


@dataclass(frozen=True)
class UncertaintyReport:
    probs: np.ndarray
    softmax_entropy: float
    log_density: float
    verdict: Verdict


def classify(entropies, log_densities, thresholds):
    """Vectorised verdicts: low density first, then high entropy."""
    entropies = np.asarray(entropies, dtype=float)
    log_densities = np.asarray(log_densities, dtype=float)
    # index into an object array so numpy never coerces the enum members to str
    codes = np.zeros(entropies.shape, dtype=np.int64)
    codes[entropies > thresholds.entropy_threshold] = 1
    codes[log_densities < thresholds.density_log_threshold] = 2
    members = np.array([Verdict.UNAMBIGUOUS_ID, Verdict.AMBIGUOUS_ID, Verdict.OOD], dtype=object)
    return members[codes]


def disentangle(probs, log_density, thresholds):
    probs = _check_probs(probs)
    h = float(_entropy_unchecked(probs))
    verdict = classify(np.array([h]), np.array([log_density]), thresholds)[0]
    return UncertaintyReport(probs, h, float(log_density), verdict)


def check_proposition1(e1, e2, delta, eps):
    """Find an ensemble member whose entropy ordering flips between two inputs.

    ``e1`` and ``e2`` are (M, K) member predictions at two inputs, paired by
    member. If the first input has mutual information larger by more than
    ``delta`` while predictive entropies differ by at most ``eps``, some
    member ``m`` must satisfy ``H(e1[m]) < H(e2[m]) - (delta - eps)``.

    Returns
    -------
    int or None
        Index of the member with the largest entropy gap, or None when even
        that member fails the strict inequality.
    """
    e1 = _check_probs(e1)
    e2 = _check_probs(e2)
    if e1.shape[0] != e2.shape[0]:
        raise PreconditionViolated("ensembles must have the same number of members")
    d1, d2 = decompose(e1), decompose(e2)
    if not d1.mutual_information > d2.mutual_information + delta:
        raise PreconditionViolated("first input does not have larger mutual information by delta")
    if abs(d1.predictive_entropy - d2.predictive_entropy) > eps:
        raise PreconditionViolated("predictive entropies differ by more than eps")
    gap = _entropy_unchecked(e1) - _entropy_unchecked(e2)
    m = int(np.argmin(gap))
    return m if gap[m] < -(delta - eps) else None
