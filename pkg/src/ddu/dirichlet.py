"""Closed-form Dirichlet moments of log-probabilities and of categorical entropy.

For ``p ~ Dir(alpha)`` this module gives ``E[log p_i]``, ``Cov[log p_i, log p_j]``,
``E[p_i^n p_j^m log p_i]``, the mean and variance of ``H(Cat(p))``, and a
maximum-entropy fit of ``alpha`` from a predictive distribution and a
mutual-information value.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import IndexConflict, IndexOutOfRange, InfeasibleMI, InvalidDistribution
from .mathcore import digamma, trigamma

ALPHA0_BRACKET = (1e-3, 1e6)
MAX_BISECTION_STEPS = 200
PREDICTIVE_FLOOR = 1e-9


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if alpha.size == 0 or np.any(~(alpha > 0)) or not np.all(np.isfinite(alpha)):
            raise ValueError("concentrations must be finite and strictly positive")
        object.__setattr__(self, "alpha", alpha)

    @property
    def alpha0(self):
        return float(self.alpha.sum())

    @property
    def k(self):
        return self.alpha.size

    @property
    def mean(self):
        return self.alpha / self.alpha0


def _params(d):
    return d if isinstance(d, DirichletParams) else DirichletParams(d)


def _index(d, i):
    if not 0 <= i < d.k:
        raise IndexOutOfRange(f"index {i} outside [0, {d.k})")
    return int(i)


def rising_factorial(x, n):
    """``x (x+1) ... (x+n-1)``; equals 1 for ``n = 0``."""
    out = 1.0
    for k in range(int(n)):
        out *= x + k
    return out


def expected_log_p(d, i):
    d = _params(d)
    i = _index(d, i)
    return digamma(d.alpha[i]) - digamma(d.alpha0)


def cov_log_p(d, i, j):
    d = _params(d)
    i, j = _index(d, i), _index(d, j)
    return (trigamma(d.alpha[i]) if i == j else 0.0) - trigamma(d.alpha0)


def moment_pn_pm_logp(d, i, j, n, m):
    """``E[p_i^n p_j^m log p_i]`` for ``i != j``."""
    d = _params(d)
    i, j = _index(d, i), _index(d, j)
    if i == j:
        raise IndexConflict("moment_pn_pm_logp needs two distinct indices")
    if n < 0 or m < 0 or int(n) != n or int(m) != m:
        raise ValueError("n and m must be non-negative integers")
    a, a0 = d.alpha, d.alpha0
    coef = rising_factorial(a[i], n) * rising_factorial(a[j], m) / rising_factorial(a0, n + m)
    return coef * (digamma(a[i] + n) - digamma(a0 + n + m))


def expected_entropy(d):
    """``E[H(Cat(p))] = psi(a0 + 1) - sum_i (a_i / a0) psi(a_i + 1)``."""
    d = _params(d)
    a, a0 = d.alpha, d.alpha0
    return float(digamma(a0 + 1.0) - np.sum(a / a0 * digamma(a + 1.0)))


def entropy_variance(d):
    """``Var[H(Cat(p))]`` as the sum of covariances of the terms ``p_i log p_i``.

    diagonal terms use E[p_i^2 log^2 p_i], off-diagonal ones
    E[p_i p_j log p_i log p_j]; the squared mean entropy is subtracted last.
    """
    d = _params(d)
    a, a0 = d.alpha, d.alpha0
    rf2 = a0 * (a0 + 1.0)

    diag_log = digamma(a + 2.0) - digamma(a0 + 2.0)
    diag = np.sum(a * (a + 1.0) / rf2 * (trigamma(a + 2.0) - trigamma(a0 + 2.0) + diag_log**2))

    cross_log = digamma(a + 1.0) - digamma(a0 + 2.0)
    w = a * cross_log
    cross_trig = trigamma(a0 + 2.0)
    # sum over i != j of a_i a_j (-psi'(a0+2) + l_i l_j)
    pair_sum = (w.sum() ** 2 - np.sum(w**2)) - cross_trig * (a.sum() ** 2 - np.sum(a**2))
    cross = pair_sum / rf2

    mean_log = digamma(a + 1.0) - digamma(a0 + 1.0)
    mean_sq = (np.sum(a / a0 * mean_log)) ** 2
    return float(diag + cross - mean_sq)


def _categorical_entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def fit_from_pe_mi(predictive, mutual_information):
    """Dirichlet with mean ``predictive`` whose expected entropy is ``H(predictive) - MI``.

    The concentration ``alpha0`` is found by bisection in log space over
    ``ALPHA0_BRACKET``; expected entropy increases with ``alpha0`` so the
    root is unique. If MI is too small to be reached inside the bracket the
    upper end is returned.
    """
    p = np.asarray(predictive, dtype=float).reshape(-1)
    if p.size < 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-8:
        raise InvalidDistribution("predictive must be a probability vector with K >= 2")
    p = np.maximum(p, PREDICTIVE_FLOOR)
    p = p / p.sum()
    h = _categorical_entropy(p)
    mi = float(mutual_information)
    if mi < 0 or mi >= h:
        raise InfeasibleMI(f"mutual information {mi} must lie in [0, H(predictive)={h})")

    def gap(log_a0):
        return h - expected_entropy(np.exp(log_a0) * p) - mi

    lo, hi = np.log(ALPHA0_BRACKET[0]), np.log(ALPHA0_BRACKET[1])
    if gap(hi) > 0:
        return DirichletParams(ALPHA0_BRACKET[1] * p)
    if gap(lo) < 0:
        raise InfeasibleMI("no root in the concentration bracket")
    for _ in range(MAX_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return DirichletParams(np.exp(0.5 * (lo + hi)) * p)


def sample(d, rng, n):
    """``n`` Dirichlet draws as normalised Gamma variates, shape (n, K)."""
    d = _params(d)
    if n < 1:
        raise ValueError("n must be >= 1")
    g = rng.gamma(d.alpha, size=(int(n), d.k))
    return g / g.sum(axis=1, keepdims=True)


def monte_carlo_entropy(d, rng, n):
    """Sample mean, variance and standard errors of ``H(Cat(p))`` under ``Dir(alpha)``."""
    p = sample(d, rng, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=1)
    mean = float(h.mean())
    dev2 = (h - mean) ** 2
    var = float(dev2.mean())
    return {
        "mc_mean": mean,
        "mc_mean_se": float(h.std(ddof=1) / np.sqrt(n)),
        "mc_var": var,
        "mc_var_se": float(dev2.std(ddof=1) / np.sqrt(n)),
    }
