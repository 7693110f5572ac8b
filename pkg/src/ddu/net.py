"""Residual MLP feature extractor with a softmax head, spectral normalisation
and hand-written backprop.

The functional core (``init_model``, ``forward``, ``backprop_gradients``,
``apply_spectral_norm``, ``train``) operates on :class:`NetModel`;
:class:`ResidualMLPClassifier` wraps it in the scikit-learn estimator API.
"""

import copy
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DivergedLoss, ShapeMismatch
from .mathcore import make_rng, power_iteration_spectral_norm

SETTLE_STEPS = 10


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 2
    width: int = 128
    num_residual_blocks: int = 4
    num_classes: int = 2
    use_residual: bool = True
    sn_coefficient: float = 3.0
    sn_on_head: bool = True
    leaky_slope: float = 0.01
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.0
    epochs: int = 150
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.input_dim <= 0 or self.num_classes < 1:
            raise ValueError("width, input_dim and num_classes must be positive")
        if self.num_residual_blocks < 0:
            raise ValueError("num_residual_blocks must be >= 0")
        if self.sn_coefficient is not None and self.sn_coefficient <= 0:
            raise ValueError("sn_coefficient must be positive when given")
        if not 0 <= self.leaky_slope < 1:
            raise ValueError("leaky_slope must lie in [0, 1)")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        object.__setattr__(self, "betas", tuple(self.betas))

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown NetConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Layer:
    """Dense layer ``y = scale * W x + b``; ``u`` is the power-iteration state."""

    weight: np.ndarray
    bias: np.ndarray
    u: np.ndarray = None
    scale: float = 1.0
    sigma: float = float("nan")

    @property
    def effective_weight(self):
        return self.weight * self.scale if self.scale != 1.0 else self.weight


@dataclass
class NetModel:
    lift: Layer
    blocks: list
    head: Layer
    config: NetConfig
    loss_history: list = field(default_factory=list)

    def layers(self):
        return [self.lift, *self.blocks, self.head]

    def sn_layers(self):
        if self.config.sn_coefficient is None:
            return []
        return [self.lift, *self.blocks] + ([self.head] if self.config.sn_on_head else [])

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class ForwardTrace:
    features: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def _init_layer(rng, n_in, n_out):
    bound = 1.0 / np.sqrt(n_in)
    w = rng.uniform(-bound, bound, size=(n_out, n_in))
    b = rng.uniform(-bound, bound, size=n_out)
    u = rng.normal(size=n_out)
    return Layer(w, b, u / np.linalg.norm(u))


def init_model(config):
    rng = make_rng(config.seed)
    lift = _init_layer(rng, config.input_dim, config.width)
    blocks = [_init_layer(rng, config.width, config.width) for _ in range(config.num_residual_blocks)]
    head = _init_layer(rng, config.width, config.num_classes)
    model = NetModel(lift, blocks, head, config)
    _spectral_norm_step(model, 1)
    return model


def _leaky(a, slope):
    return np.where(a > 0, a, slope * a)


def softmax(logits, axis=-1):
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def _features(model, x, cache=None):
    cfg = model.config
    h = x @ model.lift.effective_weight.T + model.lift.bias
    if cache is not None:
        cache.append(h)
    for block in model.blocks:
        pre = h @ block.effective_weight.T + block.bias
        act = _leaky(pre, cfg.leaky_slope)
        if cache is not None:
            cache.append(pre)
        h = h + act if cfg.use_residual else act
        if cache is not None:
            cache.append(h)
    return h


def forward(model, x):
    """Run the network on one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != model.config.input_dim:
        raise ShapeMismatch(f"expected inputs of dimension {model.config.input_dim}, got shape {x.shape}")
    z = _features(model, x2)
    logits = z @ model.head.effective_weight.T + model.head.bias
    probs = softmax(logits)
    if single:
        return ForwardTrace(z[0], logits[0], probs[0])
    return ForwardTrace(z, logits, probs)


def cross_entropy(model, x, y):
    trace = forward(model, x)
    lp = log_softmax(trace.logits)
    return float(-np.mean(lp[np.arange(len(y)), y]))


def backprop_gradients(model, x, y):
    """Mean cross-entropy and its exact gradients w.r.t. the raw parameters.

    Spectral-norm scales are held fixed, so the gradient of a raw weight is
    ``scale * dL/dW_effective``.

    Returns
    -------
    loss : float
    grads : list of (dW, db) tuples in ``model.layers()`` order
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim or len(x) != len(y) or len(x) == 0:
        raise ShapeMismatch("batch shape does not match the model")
    cfg = model.config
    n = len(x)
    cache = []
    z = _features(model, x, cache)
    logits = z @ model.head.effective_weight.T + model.head.bias
    lp = log_softmax(logits)
    loss = float(-np.mean(lp[np.arange(n), y]))

    dlogits = np.exp(lp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = [None] * (len(model.blocks) + 2)
    grads[-1] = (model.head.scale * dlogits.T @ z, dlogits.sum(axis=0))
    dh = dlogits @ model.head.effective_weight

    for k in range(len(model.blocks) - 1, -1, -1):
        block = model.blocks[k]
        h_prev = cache[2 * k]
        pre = cache[2 * k + 1]
        dpre = dh * np.where(pre > 0, 1.0, cfg.leaky_slope)
        grads[k + 1] = (block.scale * dpre.T @ h_prev, dpre.sum(axis=0))
        dh_prev = dpre @ block.effective_weight
        dh = dh_prev + dh if cfg.use_residual else dh_prev
    grads[0] = (model.lift.scale * dh.T @ x, dh.sum(axis=0))
    return loss, grads


def _spectral_norm_step(model, steps):
    c = model.config.sn_coefficient
    for layer in model.sn_layers():
        if not np.any(layer.weight):
            layer.scale, layer.sigma = 1.0, 0.0
            continue
        sigma, layer.u = power_iteration_spectral_norm(layer.weight, layer.u, steps)
        layer.sigma = sigma
        layer.scale = min(1.0, c / sigma)


def apply_spectral_norm(model, steps=1):
    """Advance every normalised layer's power iteration and rescale it.

    Returns a new model; the input is left untouched. A layer is only
    scaled down when its estimated spectral norm exceeds the coefficient.
    """
    out = model.copy()
    if out.config.sn_coefficient is not None:
        _spectral_norm_step(out, steps)
    return out


class _Adam:
    def __init__(self, params, lr, betas, weight_decay=0.0, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps, self.wd = lr, betas[0], betas[1], eps, weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if self.wd:
                g = g + self.wd * p
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _SGDMomentum:
    def __init__(self, params, lr, momentum, weight_decay=0.0):
        self.lr, self.mu, self.wd = lr, momentum, weight_decay
        self.buf = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, b in zip(params, grads, self.buf):
            if self.wd:
                g = g + self.wd * p
            b *= self.mu
            b += g
            p -= self.lr * b


def _flat_params(model):
    out = []
    for layer in model.layers():
        out.extend([layer.weight, layer.bias])
    return out


def train(x, y, config):
    """Fit a fresh network by mini-batch gradient descent on mean cross-entropy.

    One spectral-normalisation step follows every parameter update, and a
    short settle pass runs at the end so the stored scales are converged.
    Deterministic for a given ``config.seed``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= config.num_classes:
        raise ValueError("labels must lie in [0, num_classes)")
    model = init_model(config)
    params = _flat_params(model)
    if config.optimizer == "adam":
        opt = _Adam(params, config.lr, config.betas, config.weight_decay)
    else:
        opt = _SGDMomentum(params, config.lr, config.momentum, config.weight_decay)
    rng = make_rng([config.seed, 1])
    n = len(x)
    bs = min(config.batch_size, n)
    sn = config.sn_coefficient is not None
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            loss, grads = backprop_gradients(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergedLoss("training loss became non-finite")
            opt.step(params, [g for pair in grads for g in pair])
            if sn:
                _spectral_norm_step(model, 1)
            total += loss * len(idx)
        model.loss_history.append(total / n)
    if sn:
        _spectral_norm_step(model, SETTLE_STEPS)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise DivergedLoss("parameters became non-finite")
    return model


def _layer_to_dict(layer):
    return {
        "w": layer.weight.tolist(),
        "b": layer.bias.tolist(),
        "u": None if layer.u is None else layer.u.tolist(),
        "scale": layer.scale,
    }


def _layer_from_dict(d):
    return Layer(
        np.asarray(d["w"], dtype=float),
        np.asarray(d["b"], dtype=float),
        None if d.get("u") is None else np.asarray(d["u"], dtype=float),
        float(d.get("scale", 1.0)),
    )


def _dump(obj, fh):
    # repr of a Python float round-trips exactly (shortest form, <= 17 digits)
    json.dump(obj, fh, allow_nan=False)


def model_to_dict(model):
    return {
        "config": model.config.to_dict(),
        "layers": [_layer_to_dict(layer) for layer in [model.lift, *model.blocks]],
        "head": _layer_to_dict(model.head),
    }


def model_from_dict(d):
    config = NetConfig.from_dict(d["config"])
    layers = [_layer_from_dict(layer) for layer in d["layers"]]
    return NetModel(layers[0], layers[1:], _layer_from_dict(d["head"]), config)


def save_model(model, path):
    with open(path, "w") as fh:
        _dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


class ResidualMLPClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Residual MLP softmax classifier exposing its penultimate features.

    ``transform`` returns the feature vectors fed to the density model,
    ``predict_proba`` the softmax output. Setting ``use_residual=False`` and
    ``sn_coefficient=None`` gives the plain fully connected ablation.

    Parameters
    ----------
    width : int, default=128
    num_residual_blocks : int, default=4
    use_residual : bool, default=True
    sn_coefficient : float or None, default=3.0
        Upper bound on each layer's spectral norm; ``None`` disables it.
    sn_on_head : bool, default=True
    leaky_slope : float, default=0.01
    optimizer : {"adam", "sgd_momentum"}, default="adam"
    lr : float, default=1e-3
    momentum : float, default=0.9
    epochs : int, default=150
    batch_size : int, default=128
    n_classes : int or None, default=None
        Number of output units; inferred as ``max(y) + 1`` when None.
    random_state : int, default=0
    """

    def __init__(
        self,
        width=128,
        num_residual_blocks=4,
        use_residual=True,
        sn_coefficient=3.0,
        sn_on_head=True,
        leaky_slope=0.01,
        optimizer="adam",
        lr=1e-3,
        momentum=0.9,
        weight_decay=0.0,
        epochs=150,
        batch_size=128,
        n_classes=None,
        random_state=0,
    ):
        self.width = width
        self.num_residual_blocks = num_residual_blocks
        self.use_residual = use_residual
        self.sn_coefficient = sn_coefficient
        self.sn_on_head = sn_on_head
        self.leaky_slope = leaky_slope
        self.optimizer = optimizer
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.n_classes = n_classes
        self.random_state = random_state

    def _config(self, input_dim, n_classes):
        return NetConfig(
            input_dim=input_dim,
            width=self.width,
            num_residual_blocks=self.num_residual_blocks,
            num_classes=n_classes,
            use_residual=self.use_residual,
            sn_coefficient=self.sn_coefficient,
            sn_on_head=self.sn_on_head,
            leaky_slope=self.leaky_slope,
            optimizer=self.optimizer,
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.random_state,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        k = self.n_classes if self.n_classes is not None else int(y.max()) + 1
        self.model_ = train(X, y, self._config(X.shape[1], k))
        self.classes_ = np.arange(k)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model):
        cfg = model.config
        est = cls(
            width=cfg.width, num_residual_blocks=cfg.num_residual_blocks, use_residual=cfg.use_residual,
            sn_coefficient=cfg.sn_coefficient, sn_on_head=cfg.sn_on_head, leaky_slope=cfg.leaky_slope,
            optimizer=cfg.optimizer, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
            epochs=cfg.epochs, batch_size=cfg.batch_size, n_classes=cfg.num_classes, random_state=cfg.seed,
        )
        est.model_ = model
        est.classes_ = np.arange(cfg.num_classes)
        est.n_features_in_ = cfg.input_dim
        return est

    def _check(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def transform(self, X):
        return forward(self.model_, self._check(X)).features

    def decision_function(self, X):
        return forward(self.model_, self._check(X)).logits

    def predict_proba(self, X):
        return forward(self.model_, self._check(X)).probs

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
