"""The full pipeline as one estimator: train a softmax network, fit GDA on its
features, derive thresholds from the training set, and report per-sample
softmax entropy, log feature density and a verdict."""

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted, check_X_y

from .gda import GaussianDiscriminantAnalysis
from .net import ResidualMLPClassifier, softmax
from .uncertainty import Verdict, classify, compute_thresholds, entropy, fit_temperature


@dataclass
class BatchReport:
    probs: np.ndarray
    entropy: np.ndarray
    log_density: np.ndarray
    verdict: np.ndarray

    def __len__(self):
        return len(self.entropy)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["entropy", "log_density", "verdict"])
            for h, ld, v in zip(self.entropy, self.log_density, self.verdict):
                # adding 0.0 turns a negative zero entropy into 0
                writer.writerow([f"{h + 0.0:.17g}", f"{ld:.17g}", Verdict(v).value])


def report(probs, log_density, thresholds):
    probs = np.asarray(probs, dtype=float)
    if len(probs) == 0:
        empty = np.zeros(0)
        return BatchReport(probs, empty, empty, np.zeros(0, dtype=object))
    h = entropy(probs)
    return BatchReport(probs, h, np.asarray(log_density, dtype=float), classify(h, log_density, thresholds))


class DeepDeterministicUncertainty(ClassifierMixin, BaseEstimator):
    """Softmax classifier plus feature-space GDA density.

    Parameters
    ----------
    feature_extractor : estimator or None
        Classifier with ``transform`` (features) and ``decision_function``
        (logits). Cloned on fit; defaults to :class:`ResidualMLPClassifier`.
    density_quantile : float, default=0.01
        Fraction of training points whose log-density falls below the OoD threshold.
    entropy_quantile : float, default=0.95
        Training-entropy quantile above which in-distribution inputs count as ambiguous.
    """

    def __init__(self, feature_extractor=None, density_quantile=0.01, entropy_quantile=0.95):
        self.feature_extractor = feature_extractor
        self.density_quantile = density_quantile
        self.entropy_quantile = entropy_quantile

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        base = self.feature_extractor if self.feature_extractor is not None else ResidualMLPClassifier()
        self.net_ = clone(base).fit(X, y)
        self.classes_ = self.net_.classes_
        self.n_features_in_ = X.shape[1]
        z = self.net_.transform(X)
        self.gda_ = GaussianDiscriminantAnalysis(n_classes=len(self.classes_)).fit(z, y)
        self.temperature_ = 1.0
        self.thresholds_ = compute_thresholds(
            self.gda_.score_samples(z),
            entropy(softmax(self.net_.decision_function(X))),
            self.density_quantile,
            self.entropy_quantile,
        )
        return self

    def calibrate(self, X_val, y_val):
        """Fit a softmax temperature on held-out data; densities are unaffected."""
        check_is_fitted(self, "net_")
        self.temperature_ = fit_temperature(self.net_.decision_function(X_val), y_val)
        return self

    def score_samples(self, X):
        """Log feature-space density; low values indicate epistemic uncertainty."""
        check_is_fitted(self, "net_")
        return self.gda_.score_samples(self.net_.transform(X))

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        return softmax(self.net_.decision_function(X) / self.temperature_)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def predict_uncertainty(self, X):
        return report(self.predict_proba(X), self.score_samples(X), self.thresholds_)
