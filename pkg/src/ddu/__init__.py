"""Deterministic single-model uncertainty from softmax entropy and feature density."""

from .active import Acquisition, AlConfig, AlCurve, acquisition_scores
from .data import Dataset, ambiguous_pool, three_gaussians_label_noise, toy_1d, two_moons, uniform_ood_box
from .estimator import BatchReport, DeepDeterministicUncertainty
from .gda import GaussianDiscriminantAnalysis, GdaModel
from .net import NetConfig, ResidualMLPClassifier
from .uncertainty import TemperatureScaler, Thresholds, Verdict, decompose, entropy

__version__ = "0.1.0"

__all__ = [
    "Acquisition",
    "AlConfig",
    "AlCurve",
    "BatchReport",
    "Dataset",
    "DeepDeterministicUncertainty",
    "GaussianDiscriminantAnalysis",
    "GdaModel",
    "NetConfig",
    "ResidualMLPClassifier",
    "TemperatureScaler",
    "Thresholds",
    "Verdict",
    "acquisition_scores",
    "ambiguous_pool",
    "decompose",
    "entropy",
    "three_gaussians_label_noise",
    "toy_1d",
    "two_moons",
    "uniform_ood_box",
]
