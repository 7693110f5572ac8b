"""One-component-per-class Gaussian mixtures fitted under three objectives.

* conditional: minimise ``-mean log q(y|z)`` by gradient descent,
* joint: minimise ``-mean log q(y, z)``, whose closed-form optimum is GDA,
* marginal: minimise ``-mean log q(z)`` with EM on unlabelled ``z``.

:func:`score` evaluates any fitted mixture on all three cross-entropies.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import gda
from .exceptions import DegenerateComponent, Diverged, NotPositiveDefinite, ShapeMismatch
from .mathcore import log_sum_exp, make_rng

LOG_2PI = np.log(2.0 * np.pi)
# ambiguous probe between the lower class and the upper pair of the three-Gaussian toy
STAR_POINT = np.array([0.8, -3.3])


@dataclass(frozen=True)
class GmmParams:
    """Means (K, d), lower Cholesky factors of the covariances (K, d, d), log weights (K,)."""

    means: np.ndarray
    chols: np.ndarray
    log_weights: np.ndarray

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def covariances(self):
        return self.chols @ np.transpose(self.chols, (0, 2, 1))

    @classmethod
    def from_gda(cls, model):
        return cls(
            np.array(model.means, copy=True),
            np.stack([c.lower for c in model.cov_chols]),
            np.array(model.log_priors, copy=True),
        )

    # unconstrained view used by gradient descent: log-diagonal Cholesky, mixture logits
    def to_raw(self):
        raw = np.array(self.chols, copy=True)
        idx = np.arange(self.dim)
        raw[:, idx, idx] = np.log(self.chols[:, idx, idx])
        return RawGmm(np.array(self.means, copy=True), raw, np.array(self.log_weights, copy=True))


@dataclass
class RawGmm:
    means: np.ndarray
    chol_raw: np.ndarray
    logits: np.ndarray

    def to_params(self):
        d = self.means.shape[1]
        idx = np.arange(d)
        chols = np.tril(self.chol_raw, -1)
        chols[:, idx, idx] = np.exp(self.chol_raw[:, idx, idx])
        return GmmParams(self.means, chols, self.logits - log_sum_exp(self.logits))

    def flat(self):
        d = self.means.shape[1]
        rows, cols = np.tril_indices(d)
        return np.concatenate([self.means.ravel(), self.chol_raw[:, rows, cols].ravel(), self.logits])

    @classmethod
    def from_flat(cls, v, k, d):
        rows, cols = np.tril_indices(d)
        n_tri = len(rows)
        means = v[: k * d].reshape(k, d)
        tri = v[k * d: k * d + k * n_tri].reshape(k, n_tri)
        chol_raw = np.zeros((k, d, d))
        chol_raw[:, rows, cols] = tri
        return cls(means.copy(), chol_raw, v[k * d + k * n_tri:].copy())


@dataclass(frozen=True)
class ObjectiveScores:
    """Cross-entropies in nats; ``None`` where labels are not modelled."""

    cond_nll: float
    joint_nll: float
    marginal_nll: float

    @property
    def supervised(self):
        return self.cond_nll is not None


@dataclass
class FitResult:
    params: GmmParams
    trace: list = field(default_factory=list)
    converged: bool = False


def _solves(params, z):
    """Whitened residuals ``a = L^{-1}(z - mu)`` for each component, shape (K, n, d)."""
    out = np.empty((params.n_components, len(z), params.dim))
    for c in range(params.n_components):
        out[c] = solve_triangular(params.chols[c], (z - params.means[c]).T, lower=True, check_finite=False).T
    return out


def joint_log_prob(params, z, solves=None):
    """``log pi_c + log N(z; mu_c, Sigma_c)``, shape (n, K)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != params.dim:
        raise ShapeMismatch(f"expected dimension {params.dim}, got {z.shape[1]}")
    a = _solves(params, z) if solves is None else solves
    idx = np.arange(params.dim)
    log_det = 2.0 * np.sum(np.log(params.chols[:, idx, idx]), axis=1)
    comp = -0.5 * (params.dim * LOG_2PI + log_det[None, :] + np.sum(a * a, axis=2).T)
    return comp + params.log_weights


def class_posterior(params, z):
    s = joint_log_prob(params, z)
    return np.exp(s - log_sum_exp(s, axis=1)[:, None])


def score(params, dataset, supervised=True):
    """Conditional, joint and marginal cross-entropies of ``params`` on ``dataset``."""
    z, y = dataset.x, dataset.y
    if len(z) == 0:
        raise ValueError("empty dataset")
    s = joint_log_prob(params, z)
    lse = log_sum_exp(s, axis=1)
    marginal = float(-np.mean(lse))
    if not supervised:
        return ObjectiveScores(None, None, marginal)
    if y.max() >= params.n_components:
        raise ShapeMismatch("labels exceed the number of components")
    picked = s[np.arange(len(y)), y]
    return ObjectiveScores(float(-np.mean(picked - lse)), float(-np.mean(picked)), marginal)


def conditional_nll(params, z, y):
    s = joint_log_prob(params, z)
    return float(-np.mean(s[np.arange(len(y)), y] - log_sum_exp(s, axis=1)))


def conditional_nll_grad(raw, z, y):
    """Mean conditional NLL and its gradient w.r.t. the unconstrained parameters."""
    params = raw.to_params()
    a = _solves(params, z)
    s = joint_log_prob(params, z, a)
    lse = log_sum_exp(s, axis=1)
    n = len(y)
    value = float(-np.mean(s[np.arange(n), y] - lse))
    resp = np.exp(s - lse[:, None])
    onehot = np.zeros_like(resp)
    onehot[np.arange(n), y] = 1.0
    # d value / d s_nc
    w = (resp - onehot) / n
    return value, _grad_from_weights(params, a, w)


def _grad_from_weights(params, a, w):
    k, d = params.n_components, params.dim
    idx = np.arange(d)
    g_means = np.empty((k, d))
    g_raw = np.empty((k, d, d))
    for c in range(k):
        lower = params.chols[c]
        wc = w[:, c]
        weighted = a[c].T @ wc
        g_means[c] = solve_triangular(lower, weighted, lower=True, trans="T", check_finite=False)
        outer = (a[c] * wc[:, None]).T @ a[c]
        g_l = np.tril(solve_triangular(lower, outer, lower=True, trans="T", check_finite=False))
        g_l[idx, idx] -= wc.sum() / lower[idx, idx]
        g_l_raw = np.array(g_l, copy=True)
        g_l_raw[idx, idx] *= lower[idx, idx]
        g_raw[c] = g_l_raw
    # d log pi_c / d logit_j = delta_cj - pi_j
    pi = np.exp(params.log_weights)
    col = w.sum(axis=0)
    g_logits = col - pi * col.sum()
    return RawGmm(g_means, g_raw, g_logits)


def fit_conditional(dataset, init=None, lr=1e-2, tol=1e-8, max_iter=5000):
    """Gradient descent on the mean conditional NLL starting from ``init`` (GDA by default).

    Steps that would increase the objective are retried with half the
    learning rate, so the recorded trace is non-increasing.
    """
    z, y = dataset.x, dataset.y
    k = dataset.n_classes
    if np.any(np.bincount(y, minlength=k) == 0):
        raise ValueError("every class must be present")
    if init is None:
        init = fit_joint(dataset)
    raw = init.to_raw()
    kk, d = init.n_components, init.dim
    value, grad = conditional_nll_grad(raw, z, y)
    trace = [value]
    converged = False
    step = lr
    for _ in range(max_iter):
        theta = raw.flat()
        g = grad.flat()
        if not np.all(np.isfinite(g)):
            raise Diverged("non-finite gradient")
        accepted = False
        while step > 1e-14:
            cand = RawGmm.from_flat(theta - step * g, kk, d)
            try:
                new_value, new_grad = conditional_nll_grad(cand, z, y)
            except (FloatingPointError, np.linalg.LinAlgError):
                new_value = np.inf
            if np.isfinite(new_value) and new_value <= value:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        rel = abs(value - new_value) / max(abs(value), 1e-300)
        raw, value, grad = cand, new_value, new_grad
        trace.append(value)
        if rel < tol:
            converged = True
            break
    return FitResult(raw.to_params(), trace, converged)


def fit_joint(dataset):
    """Closed-form joint-likelihood optimum: exactly the GDA fit."""
    return GmmParams.from_gda(gda.fit(dataset.x, dataset.y, dataset.n_classes))


def _marginal_nll(params, z):
    return float(-np.mean(log_sum_exp(joint_log_prob(params, z), axis=1)))


def fit_marginal_em(dataset, n_components=None, init=None, tol=1e-8, max_iter=1000, seed=0):
    """EM on unlabelled features, started from GDA with slightly perturbed means.

    Iterations stop once the marginal NLL improves by less than ``tol``
    (relative) or would increase.
    """
    z = dataset.x
    n, d = z.shape
    k = n_components if n_components is not None else dataset.n_classes
    if n < k * (d + 1):
        raise ValueError("too few samples for the requested number of components")
    if init is None:
        init = fit_joint(dataset)
        rng = make_rng(seed)
        jitter = 1e-3 * z.std(axis=0) * rng.choice([-1.0, 1.0], size=init.means.shape)
        init = GmmParams(init.means + jitter, init.chols, init.log_weights)
    params = init
    value = _marginal_nll(params, z)
    trace = [value]
    converged = False
    for _ in range(max_iter):
        s = joint_log_prob(params, z)
        resp = np.exp(s - log_sum_exp(s, axis=1)[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk / n < 1e-6):
            raise DegenerateComponent("a mixture component lost all its mass")
        means = (resp.T @ z) / nk[:, None]
        covs = []
        for c in range(k):
            dev = z - means[c]
            covs.append((dev * resp[:, c:c + 1]).T @ dev / nk[c])
        try:
            chols, _ = gda.factorize_with_jitter(covs)
        except NotPositiveDefinite as exc:
            raise DegenerateComponent(str(exc)) from None
        new = GmmParams(means, np.stack([c.lower for c in chols]), np.log(nk / n))
        new_value = _marginal_nll(new, z)
        if new_value > value:
            converged = True
            break
        rel = (value - new_value) / max(abs(value), 1e-300)
        params, value = new, new_value
        trace.append(value)
        if rel < tol:
            converged = True
            break
    return FitResult(params, trace, converged)


OBJECTIVE_ROWS = ("min H(Y|Z)", "min H(Y,Z)", "min H(Z)")
SCORE_COLUMNS = ("H(Y|Z)", "H(Y,Z)", "H(Z)")


def objective_table(dataset, seed=0):
    """Fit all three objectives and score each fit; returns (fits, scores) keyed by row."""
    joint = fit_joint(dataset)
    cond = fit_conditional(dataset, init=joint)
    marginal = fit_marginal_em(dataset, seed=seed)
    fits = {
        OBJECTIVE_ROWS[0]: cond.params,
        OBJECTIVE_ROWS[1]: joint,
        OBJECTIVE_ROWS[2]: marginal.params,
    }
    scores = {
        OBJECTIVE_ROWS[0]: score(cond.params, dataset),
        OBJECTIVE_ROWS[1]: score(joint, dataset),
        OBJECTIVE_ROWS[2]: score(marginal.params, dataset, supervised=False),
    }
    return fits, scores


def diagonal_dominance(scores, tol=1e-6):
    """Each fit attains the lowest value of its own objective among fits where it is defined."""
    cols = {
        "H(Y|Z)": lambda s: s.cond_nll,
        "H(Y,Z)": lambda s: s.joint_nll,
        "H(Z)": lambda s: s.marginal_nll,
    }
    ok = True
    for row, col in zip(OBJECTIVE_ROWS, SCORE_COLUMNS):
        own = cols[col](scores[row])
        others = [cols[col](s) for r, s in scores.items() if r != row and cols[col](s) is not None]
        ok &= all(own <= o + tol for o in others)
    return bool(ok)


def write_table(scores, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["objective", *SCORE_COLUMNS])
        for row in OBJECTIVE_ROWS:
            s = scores[row]
            cells = [s.cond_nll, s.joint_nll, s.marginal_nll]
            writer.writerow([row] + ["n/a" if v is None else f"{v:.17g}" for v in cells])
