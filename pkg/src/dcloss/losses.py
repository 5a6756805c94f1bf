"""Softmax-composed losses for label distribution learning.

Four losses are provided, each returning its value and the gradient with
respect to the logits ``z`` that produced ``p = softmax(z)``:

* ``ce``    -- cross-entropy against the true bin,
* ``ce_mv`` -- cross-entropy plus mean and variance penalties,
* ``kl``    -- ``sum_k q_k log(q_k / p_k)``,
* ``dc``    -- ``log(1 - alpha (1 - B)) / log(1 - alpha)`` with the
  Bhattacharyya coefficient ``B = sum_k sqrt(p_k q_k)``.

All logarithms are natural. The DC value is a ratio of logs and so does not
depend on the base; its gradient prefactor ``alpha / (2 ln(1 - alpha))`` is
the same constant sometimes written ``alpha log e / (2 log(1 - alpha))``
with base-10 logs. The prefactor is negative.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError


class LossKind(str, enum.Enum):
    CE = "ce"
    KL = "kl"
    CE_MV = "ce_mv"
    DC = "dc"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown loss {name!r}; choose from ce, kl, ce-mv, dc") from None


DEFAULT_ALPHA = 0.01
DEFAULT_LAMBDA1 = 0.2
DEFAULT_LAMBDA2 = 0.05


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.DC
    alpha: float = DEFAULT_ALPHA
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise DomainError("lambda1 and lambda2 must be non-negative")

    @property
    def uses_distribution(self):
        """True when the target is a label distribution rather than a bin."""
        return self.kind in (LossKind.KL, LossKind.DC)

    def as_dict(self):
        return {
            "loss": self.kind.value,
            "alpha": self.alpha,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
        }


@dataclass
class LossResult:
    value: float
    grad_z: np.ndarray


def _vec(x, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-d vector")
    return a


def _pair(p, q):
    p, q = _vec(p, "p"), _vec(q, "q")
    if p.shape != q.shape:
        raise DomainError(f"length mismatch: {p.size} vs {q.size}")
    return p, q


def _label(y, L):
    if int(y) != y or not 1 <= y <= L:
        raise DomainError(f"label {y!r} outside [1, {L}]")
    return int(y)


def softmax(z):
    z = _vec(z, "z")
    e = np.exp(z - z.max())
    return e / e.sum()


def log_softmax(z):
    z = _vec(z, "z")
    m = z.max()
    return z - m - math.log(np.exp(z - m).sum())


def bhattacharyya(p, q):
    p, q = _pair(p, q)
    return float(np.sqrt(p * q).sum())


def dc_loss(p, q, alpha=DEFAULT_ALPHA):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    p, q = _pair(p, q)
    root = np.sqrt(p * q)
    B = root.sum()
    # rounding can push B a hair above 1
    deficit = max(1.0 - B, 0.0)
    log_keep = math.log1p(-alpha)
    value = math.log1p(-alpha * deficit) / log_keep
    grad = alpha / (2.0 * log_keep) * (root - p * B) / (1.0 - alpha * deficit)
    return LossResult(value, grad)


def kl_loss(p, q):
    """KL(q || p) in nats; bins with ``q_k = 0`` contribute nothing."""
    p, q = _pair(p, q)
    pos = q > 0
    with np.errstate(divide="ignore"):
        value = float(np.sum(q[pos] * (np.log(q[pos]) - np.log(p[pos]))))
    return LossResult(value, p - q)


def kl_loss_logits(z, q):
    """KL evaluated through log-softmax; stays finite when ``p`` underflows."""
    z, q = _pair(z, q)
    logp = log_softmax(z)
    pos = q > 0
    value = float(np.sum(q[pos] * (np.log(q[pos]) - logp[pos])))
    return LossResult(value, np.exp(logp) - q)


def ce_loss(p, y_onehot):
    p, s = _pair(p, y_onehot)
    hot = np.flatnonzero(s)
    if hot.size != 1 or s[hot[0]] != 1:
        raise DomainError("target must be a one-hot vector")
    i = hot[0]
    with np.errstate(divide="ignore"):
        value = float(-np.log(p[i]))
    return LossResult(value, p - s)


def cemv_loss(p, y, lambda1=DEFAULT_LAMBDA1, lambda2=DEFAULT_LAMBDA2):
    """Cross-entropy regularised by mean and variance of ``p`` over bins 1..L."""
    if lambda1 < 0 or lambda2 < 0:
        raise DomainError("lambda1 and lambda2 must be non-negative")
    p = _vec(p, "p")
    L = p.size
    y = _label(y, L)
    bins = np.arange(1, L + 1, dtype=np.float64)
    mu = float(p @ bins)
    c = bins - mu
    var = float(p @ (c * c))
    with np.errstate(divide="ignore"):
        ce = float(-np.log(p[y - 1]))
    value = ce + lambda1 * (mu - y) ** 2 + lambda2 * var
    grad = p.copy()
    grad[y - 1] -= 1.0
    # d mu / dz_i = p_i (i - mu);  d var / dz_i = p_i ((i - mu)^2 - var)
    grad += 2.0 * lambda1 * (mu - y) * p * c + lambda2 * p * (c * c - var)
    return LossResult(value, grad)


def loss_from_logits(z, target, spec):
    """Evaluate ``spec`` at ``softmax(z)``.

    ``target`` is a label distribution for KL/DC and a 1-based bin for
    CE/CE-MV.
    """
    p = softmax(z)
    kind = spec.kind
    if kind is LossKind.DC:
        return dc_loss(p, target, spec.alpha)
    if kind is LossKind.KL:
        return kl_loss(p, target)
    y = _label(target, p.size)
    if kind is LossKind.CE:
        onehot = np.zeros(p.size)
        onehot[y - 1] = 1.0
        return ce_loss(p, onehot)
    return cemv_loss(p, y, spec.lambda1, spec.lambda2)


def profile(p, q, spec):
    """Per-bin contribution of a distribution-pair loss.

    KL gives ``r_i = q_i log(q_i / p_i)``, which is signed. DC gives the
    Bhattacharyya deficit ``d_i = (p_i + q_i)/2 - sqrt(p_i q_i)``: it is
    non-negative, symmetric in ``p`` and ``q``, and sums to ``1 - B``. It is
    a diagnostic decomposition, not a term of the DC loss itself.
    """
    p, q = _pair(p, q)
    kind = spec.kind if isinstance(spec, LossSpec) else LossKind.parse(spec)
    if kind is LossKind.KL:
        out = np.zeros_like(q)
        pos = q > 0
        with np.errstate(divide="ignore"):
            out[pos] = q[pos] * (np.log(q[pos]) - np.log(p[pos]))
        return out
    if kind is LossKind.DC:
        # (sqrt p - sqrt q)^2 / 2, written to be exactly 0 where p_i == q_i
        return 0.5 * (np.sqrt(p) - np.sqrt(q)) ** 2
    raise DomainError(f"no per-bin profile for loss {kind.value!r}")


def batch_loss_grad(Z, Q, labels, spec, backend=None):
    """Per-row loss values and logit gradients for a minibatch.

    Parameters
    ----------
    Z : (N, L) logits.
    Q : (N, L) target distributions (used by KL and DC).
    labels : (N,) 1-based integer bins (used by CE and CE-MV).
    spec : LossSpec
    backend : "numba", "numpy" or None for the process default.

    Returns
    -------
    values : (N,) array
    G : (N, L) array of d loss_n / d Z[n]
    """
    k = kernels.get_kernels(backend)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    P = k["softmax"](Z)
    kind = spec.kind
    if kind is LossKind.DC:
        return k["dc"](P, np.ascontiguousarray(Q, dtype=np.float64), float(spec.alpha))
    if kind is LossKind.KL:
        return k["kl"](P, np.ascontiguousarray(Q, dtype=np.float64))
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if kind is LossKind.CE:
        return k["ce"](Z, P, labels)
    return k["ce_mv"](Z, P, labels, float(spec.lambda1), float(spec.lambda2))
