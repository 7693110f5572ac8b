"""Numerical building blocks: Cholesky, log-sum-exp, digamma/trigamma,
power iteration and seeded random streams.

Everything here works on plain ``numpy`` arrays in float64.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import DomainError, EmptyInput, NotPositiveDefinite, ShapeMismatch, ZeroMatrix

__all__ = [
    "CholeskyFactor",
    "cholesky",
    "log_sum_exp",
    "digamma",
    "trigamma",
    "power_iteration_spectral_norm",
    "make_rng",
]

_SYMMETRY_TOL = 1e-10
_ASYMPTOTIC_SHIFT = 6.0


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower Cholesky factor ``L`` of an SPD matrix together with its log-determinant."""

    lower: np.ndarray
    log_det: float

    @property
    def dim(self):
        return self.lower.shape[0]

    def reconstruct(self):
        return self.lower @ self.lower.T

    def solve_lower(self, b):
        """Return ``L^{-1} b`` (forward substitution)."""
        return solve_triangular(self.lower, b, lower=True, check_finite=False)


def cholesky(m):
    """Factor a symmetric positive-definite matrix.

    No jitter is added: a degenerate matrix raises ``NotPositiveDefinite``
    so the caller can decide how much regularisation to apply.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = max(np.max(np.abs(m)), 1.0)
    if np.max(np.abs(m - m.T)) > _SYMMETRY_TOL * scale:
        raise ShapeMismatch("matrix is not symmetric")
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    diag = np.diag(lower)
    if not np.all(diag > 0) or not np.all(np.isfinite(lower)):
        raise NotPositiveDefinite("non-positive pivot")
    return CholeskyFactor(lower=lower, log_det=float(2.0 * np.sum(np.log(diag))))


def log_sum_exp(v, axis=None):
    """Overflow-safe ``log(sum(exp(v)))``."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise EmptyInput("log_sum_exp of an empty vector")
    vmax = np.max(v, axis=axis, keepdims=True)
    vmax = np.where(np.isfinite(vmax), vmax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - vmax), axis=axis, keepdims=True)) + vmax
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _check_positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} requires x > 0")
    return x


def digamma(x):
    """psi(x) for x > 0 via upward recurrence and the asymptotic series."""
    x = _check_positive(x, "digamma")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).astype(float)
    acc = np.zeros_like(x)
    z = x.copy()
    low = z < _ASYMPTOTIC_SHIFT
    while np.any(low):
        acc[low] -= 1.0 / z[low]
        z[low] += 1.0
        low = z < _ASYMPTOTIC_SHIFT
    inv = 1.0 / z
    inv2 = inv * inv
    # Bernoulli-number coefficients B_2k / (2k)
    series = inv2 * (
        1.0 / 12
        - inv2
        * (
            1.0 / 120
            - inv2
            * (
                1.0 / 252
                - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12)))
            )
        )
    )
    out = acc + np.log(z) - 0.5 * inv - series
    return float(out[0]) if scalar else out


def trigamma(x):
    """psi'(x) for x > 0 via upward recurrence and the asymptotic series."""
    x = _check_positive(x, "trigamma")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).astype(float)
    acc = np.zeros_like(x)
    z = x.copy()
    low = z < _ASYMPTOTIC_SHIFT
    while np.any(low):
        acc[low] += 1.0 / (z[low] * z[low])
        z[low] += 1.0
        low = z < _ASYMPTOTIC_SHIFT
    inv = 1.0 / z
    inv2 = inv * inv
    series = (
        1.0 / 6
        - inv2
        * (
            1.0 / 30
            - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * (5.0 / 66 - inv2 * (691.0 / 2730 - inv2 * 7.0 / 6))))
        )
    )
    out = acc + inv + 0.5 * inv2 + inv * inv2 * series
    return float(out[0]) if scalar else out


def power_iteration_spectral_norm(w, u, steps=1):
    """Estimate the largest singular value of ``w`` by power iteration.

    Parameters
    ----------
    w : ndarray of shape (m, n)
    u : ndarray of shape (m,)
        Current unit-norm estimate of the leading left singular vector.
    steps : int
        Number of power-iteration steps.

    Returns
    -------
    sigma : float
    u : ndarray of shape (m,)
        Updated left singular vector estimate, unit norm.
    """
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    if w.ndim != 2 or u.shape != (w.shape[0],):
        raise ShapeMismatch(f"u of shape {u.shape} does not match w of shape {w.shape}")
    if not np.any(w):
        raise ZeroMatrix("power iteration on an all-zero matrix")
    sigma = 0.0
    for _ in range(max(int(steps), 1)):
        v = w.T @ u
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            # u orthogonal to the row space; restart from the largest row
            row = np.argmax(np.linalg.norm(w, axis=1))
            v = w[row].copy()
            norm_v = np.linalg.norm(v)
        v /= norm_v
        wv = w @ v
        sigma = float(np.linalg.norm(wv))
        u = wv / sigma
    return sigma, u


def make_rng(seed):
    """Seeded PCG64 generator; the stream is identical on every platform."""
    return np.random.Generator(np.random.PCG64(seed))
