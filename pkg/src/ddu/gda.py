"""Gaussian discriminant analysis as a post-hoc feature-space density.

One full-covariance Gaussian per class with empirical means, unbiased
covariances and class-frequency priors. ``score_samples`` returns the log
marginal density ``log sum_c pi_c N(z; mu_c, Sigma_c)``.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ClassUnderpopulated, NotPositiveDefinite, ShapeMismatch
from .mathcore import CholeskyFactor, cholesky, log_sum_exp

LOG_2PI = np.log(2.0 * np.pi)
# 0 first, then 1e-10, 1e-9, ... shared across classes
JITTER_LADDER = (0.0,) + tuple(10.0**k for k in range(-10, 11))


@dataclass(frozen=True)
class ClassStats:
    """Streaming sufficient statistics: count, mean and scatter matrix."""

    count: int
    mean: np.ndarray
    scatter: np.ndarray

    @classmethod
    def from_rows(cls, z):
        mean = z.mean(axis=0)
        dev = z - mean
        return cls(len(z), mean, dev.T @ dev)

    def merge(self, other):
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        scatter = self.scatter + other.scatter + np.outer(delta, delta) * (self.count * other.count / n)
        return ClassStats(n, mean, scatter)

    @property
    def covariance(self):
        return self.scatter / (self.count - 1)


@dataclass(frozen=True)
class GdaModel:
    means: np.ndarray
    cov_chols: tuple
    log_priors: np.ndarray
    jitter: float

    @property
    def n_classes(self):
        return len(self.means)

    @property
    def dim(self):
        return self.means.shape[1]

    def component_log_pdf(self, z):
        """``log N(z; mu_c, Sigma_c)`` for every row and class, shape (n, K)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.dim:
            raise ShapeMismatch(f"expected feature dimension {self.dim}, got {z.shape[1]}")
        out = np.empty((len(z), self.n_classes))
        for c, (mu, chol) in enumerate(zip(self.means, self.cov_chols)):
            a = solve_triangular(chol.lower, (z - mu).T, lower=True, check_finite=False)
            out[:, c] = -0.5 * (self.dim * LOG_2PI + chol.log_det + np.sum(a * a, axis=0))
        return out

    def joint_log_prob(self, z):
        return self.component_log_pdf(z) + self.log_priors

    def log_density(self, z):
        return log_sum_exp(self.joint_log_prob(z), axis=1)

    def class_posterior(self, z):
        joint = self.joint_log_prob(z)
        return np.exp(joint - log_sum_exp(joint, axis=1)[:, None])

    def to_dict(self):
        return {
            "K": self.n_classes,
            "d": self.dim,
            "classes": [
                {"mean": mu.tolist(), "cov_lower": chol.lower.tolist(), "log_prior": float(lp)}
                for mu, chol, lp in zip(self.means, self.cov_chols, self.log_priors)
            ],
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d):
        chols = []
        for entry in d["classes"]:
            lower = np.asarray(entry["cov_lower"], dtype=float)
            chols.append(CholeskyFactor(lower, float(2.0 * np.sum(np.log(np.diag(lower))))))
        return cls(
            np.asarray([e["mean"] for e in d["classes"]], dtype=float).reshape(d["K"], d["d"]),
            tuple(chols),
            np.asarray([e["log_prior"] for e in d["classes"]], dtype=float),
            float(d["jitter"]),
        )


def factorize_with_jitter(covariances, ladder=JITTER_LADDER):
    """Cholesky-factor every covariance with the smallest shared jitter that works."""
    d = covariances[0].shape[0]
    eye = np.eye(d)
    for eps in ladder:
        try:
            return tuple(cholesky(cov + eps * eye) for cov in covariances), eps
        except NotPositiveDefinite:
            continue
    raise NotPositiveDefinite("covariances could not be factorised with any jitter")


def class_statistics(z, y, n_classes):
    return [ClassStats.from_rows(z[y == c]) if np.any(y == c) else None for c in range(n_classes)]


def model_from_statistics(stats):
    for c, s in enumerate(stats):
        if s is None or s.count < 2:
            raise ClassUnderpopulated(c, 0 if s is None else s.count)
    counts = np.array([s.count for s in stats], dtype=float)
    chols, eps = factorize_with_jitter([s.covariance for s in stats])
    return GdaModel(
        means=np.stack([s.mean for s in stats]),
        cov_chols=chols,
        log_priors=np.log(counts / counts.sum()),
        jitter=eps,
    )


def fit(features, labels, n_classes=None):
    """Fit a :class:`GdaModel` in a single pass over ``(features, labels)``."""
    z = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    return model_from_statistics(class_statistics(z, y, k))


class GaussianDiscriminantAnalysis(DensityMixin, BaseEstimator):
    """Per-class Gaussian density model over feature vectors.

    Parameters
    ----------
    n_classes : int or None, default=None
        Number of classes; inferred from the labels seen so far when None.

    Attributes
    ----------
    model_ : GdaModel
    stats_ : list of ClassStats
        Sufficient statistics, so ``partial_fit`` can stream further chunks.
    """

    def __init__(self, n_classes=None):
        self.n_classes = n_classes

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.stats_ = None
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        prev = getattr(self, "stats_", None)
        k = self.n_classes
        if k is None:
            k = max(int(y.max()) + 1, len(prev) if prev else 0)
        new = class_statistics(X, y, k)
        if prev:
            prev = list(prev) + [None] * (k - len(prev))
            new = [
                a if b is None else b if a is None else a.merge(b)
                for a, b in zip(prev, new)
            ]
        self.stats_ = new
        self.model_ = model_from_statistics(new)
        self.classes_ = np.arange(k)
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    @property
    def means_(self):
        return self.model_.means

    @property
    def covariances_(self):
        return np.stack([chol.reconstruct() for chol in self.model_.cov_chols])

    @property
    def jitter_(self):
        return self.model_.jitter

    def score_samples(self, X):
        """Log marginal feature density of each row."""
        return self.model_.log_density(self._check(X))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def predict_proba(self, X):
        return self.model_.class_posterior(self._check(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def save(self, path):
        check_is_fitted(self, "model_")
        with open(path, "w") as fh:
            json.dump(self.model_.to_dict(), fh, allow_nan=False)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            model = GdaModel.from_dict(json.load(fh))
        est = cls(n_classes=model.n_classes)
        est.model_ = model
        est.stats_ = None
        est.classes_ = np.arange(model.n_classes)
        est.n_features_in_ = model.dim
        return est
