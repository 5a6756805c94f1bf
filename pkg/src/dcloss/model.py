"""Small MLP regressor over age bins, trained with SGD + momentum.

Layer ``k`` maps ``h -> W_k h + b_k`` with ``W_k`` of shape ``(out, in)``;
hidden layers apply ReLU or tanh, the last layer emits logits. Inputs are
standardised with the training set's per-feature mean and std, which are
stored with the model.

Checkpoints are UTF-8 JSON::

    {"format": "dcloss-mlp", "version": 1,
     "layer_dims": [D, h1, ..., L], "activation": "relu" | "tanh",
     "input_mean": [...D], "input_std": [...D],
     "weights": [[[row-major W_0]], ...], "biases": [[b_0], ...],
     "train_config": {...}, "trace": {"loss": [...], "lr": [...]}}

Floats are serialised with ``repr`` precision, so load(save(m)) == m.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, FormatError, TrainingDiverged
from .label_codec import DEFAULT_SIGMA, encode_gaussian_batch
from .losses import LossSpec, batch_loss_grad

CHECKPOINT_FORMAT = "dcloss-mlp"
CHECKPOINT_VERSION = 1
ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpModel:
    layer_dims: list
    weights: list
    biases: list
    activation: str = "relu"
    input_mean: np.ndarray = None
    input_std: np.ndarray = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}")
        self.layer_dims = [int(d) for d in self.layer_dims]
        D = self.layer_dims[0]
        if self.input_mean is None:
            self.input_mean = np.zeros(D)
        if self.input_std is None:
            self.input_std = np.ones(D)
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[k + 1], self.layer_dims[k]) or b.shape != (W.shape[0],):
                raise DomainError(f"layer {k} parameters do not match layer_dims")

    @property
    def n_bins(self):
        return self.layer_dims[-1]

    def params(self):
        """Parameters in a fixed order: W_0, b_0, W_1, b_1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def n_params(self):
        return sum(p.size for p in self.params())


def init_mlp(layer_dims, activation="relu", seed=0):
    """He-scaled normal weights (Glorot-scaled for tanh), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        gain = 2.0 if activation == "relu" else 1.0
        weights.append(rng.standard_normal((fan_out, fan_in)) * math.sqrt(gain / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_dims), weights, biases, activation)


def _act(h, kind):
    return np.maximum(h, 0.0) if kind == "relu" else np.tanh(h)


def _forward_cache(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.layer_dims[0]:
        raise DomainError(f"expected {model.layer_dims[0]} features, got {X.shape[1]}")
    h = (X - model.input_mean) / model.input_std
    acts = [h]
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ W.T + b
        if k < last:
            h = _act(h, model.activation)
        acts.append(h)
    return acts


def forward(model, x):
    """Logits for one feature vector ``(D,)`` or a batch ``(N, D)``."""
    acts = _forward_cache(model, x)
    z = acts[-1]
    return z[0] if np.ndim(x) == 1 else z


def predict_proba(model, X):
    from .kernels import softmax_rows_np

    return softmax_rows_np(np.atleast_2d(forward(model, X)))


def backward(model, X, Q=None, labels=None, spec=None, backend=None):
    """Mean loss over the batch and its gradient for every parameter.

    ``Q`` are target distributions (KL/DC), ``labels`` 1-based bins
    (CE/CE-MV). For a single sample pass 1-d ``X`` and ``Q``.
    Returns ``(loss, grads)`` with ``grads`` ordered like ``model.params()``.
    """
    spec = spec or LossSpec()
    acts = _forward_cache(model, X)
    N = acts[0].shape[0]
    L = model.n_bins
    if Q is None:
        Q = np.zeros((N, L))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if labels is None:
        labels = np.argmax(Q, axis=1) + 1
    labels = np.atleast_1d(labels)
    values, G = batch_loss_grad(acts[-1], Q, labels, spec, backend)
    delta = G / N
    grads = [None] * (2 * len(model.weights))
    for k in range(len(model.weights) - 1, -1, -1):
        grads[2 * k] = delta.T @ acts[k]
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = delta @ model.weights[k]
            if model.activation == "relu":
                delta = delta * (acts[k] > 0)
            else:
                delta = delta * (1.0 - acts[k] ** 2)
    return float(values.mean()), grads


@dataclass
class TrainConfig:
    loss: LossSpec = field(default_factory=LossSpec)
    epochs: int = 30
    batch_size: int = 80
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    seed: int = 0
    hidden: tuple = (64, 64)
    activation: str = "relu"
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise DomainError("momentum must lie in [0, 1)")
        if not self.lr_start >= self.lr_end > 0:
            raise DomainError("need lr_start >= lr_end > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise DomainError("batch_size and epochs must be >= 1")
        if self.weight_decay < 0:
            raise DomainError("weight_decay must be non-negative")
        self.hidden = tuple(int(h) for h in self.hidden)

    def as_dict(self):
        d = asdict(self)
        d.pop("loss")
        d["hidden"] = list(self.hidden)
        return {**self.loss.as_dict(), **d}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        loss = LossSpec(
            d.pop("loss"), d.pop("alpha"), d.pop("lambda1"), d.pop("lambda2")
        )
        return cls(loss=loss, **d)


@dataclass
class TrainTrace:
    loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)


def lr_at(epoch, cfg):
    """Geometric interpolation from ``lr_start`` (epoch 0) to ``lr_end`` (last)."""
    if cfg.epochs < 2:
        return cfg.lr_start
    if not 0 <= epoch < cfg.epochs:
        raise DomainError(f"epoch {epoch} outside [0, {cfg.epochs})")
    return cfg.lr_start * (cfg.lr_end / cfg.lr_start) ** (epoch / (cfg.epochs - 1))


def train(data, cfg, backend=None, model=None):
    """Fit an MLP to ``data`` (a SampleSet). Deterministic given ``cfg.seed``."""
    if len(data) == 0:
        raise DomainError("empty training set")
    X = data.features
    labels = data.ages
    L = data.L
    Q = encode_gaussian_batch(labels, L, cfg.sigma)
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        dims = [X.shape[1], *cfg.hidden, L]
        model = init_mlp(dims, cfg.activation, seed=int(rng.integers(2**31)))
        model.input_mean = X.mean(axis=0)
        std = X.std(axis=0)
        model.input_std = np.where(std > 0, std, 1.0)
    params = model.params()
    velocity = [np.zeros_like(p) for p in params]
    trace = TrainTrace()
    N = len(data)
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(N)
        total = 0.0
        for b, start in enumerate(range(0, N, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss, grads = backward(model, X[idx], Q[idx], labels[idx], cfg.loss, backend)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            total += loss * idx.size
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v -= lr * (g + cfg.weight_decay * p)
                p += v
        trace.loss.append(total / N)
        trace.lr.append(lr)
    return model, trace


def predict_ages(model, X):
    """Argmax-decoded bins (1-based) for a batch of feature vectors."""
    z = np.atleast_2d(forward(model, X))
    return np.argmax(z, axis=1) + 1


def _floats(a):
    return np.asarray(a, dtype=np.float64).tolist()


def save_checkpoint(path, model, cfg=None, trace=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_dims": model.layer_dims,
        "activation": model.activation,
        "input_mean": _floats(model.input_mean),
        "input_std": _floats(model.input_std),
        "weights": [_floats(W) for W in model.weights],
        "biases": [_floats(b) for b in model.biases],
        "train_config": cfg.as_dict() if cfg else None,
        "trace": asdict(trace) if trace else None,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=None, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(model, cfg_or_None, trace_or_None)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not a JSON checkpoint: {exc}", exc.lineno) from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"checkpoint version {doc.get('version')!r} unsupported, expected {CHECKPOINT_VERSION}"
        )
    model = MlpModel(
        doc["layer_dims"],
        [np.asarray(W, dtype=np.float64).reshape(o, i)
         for W, i, o in zip(doc["weights"], doc["layer_dims"][:-1], doc["layer_dims"][1:])],
        [np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        doc["activation"],
        np.asarray(doc["input_mean"], dtype=np.float64),
        np.asarray(doc["input_std"], dtype=np.float64),
    )
    cfg = TrainConfig.from_dict(doc["train_config"]) if doc.get("train_config") else None
    trace = TrainTrace(**doc["trace"]) if doc.get("trace") else None
    return model, cfg, trace
