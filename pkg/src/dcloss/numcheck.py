"""Central finite-difference oracle for analytic logit gradients.

:func:`check` differentiates an independent 128-bit MPFR evaluation of
each loss value. The oracle shares no code with the float64 loss module,
and its rounding noise sits far below the tolerances used against it.
"""

import math
from dataclasses import asdict, dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .label_codec import encode_gaussian
from .losses import LossKind, LossSpec, loss_from_logits

DEFAULT_STEP = 1e-5
REL_FLOOR = 1e-8


class NonFiniteEvaluation(ArithmeticError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"loss evaluated to {value!r} when perturbing coordinate {index}")


@dataclass
class GradCheckReport:
    max_abs_err: float
    max_rel_err: float
    worst_index: int
    passed: bool
    trials: int = 0
    tolerance: float = 0.0

    def as_dict(self):
        return asdict(self)


def finite_diff_grad(loss_fn, z, h=DEFAULT_STEP):
    """``(f(z + h e_i) - f(z - h e_i)) / 2h`` for every coordinate ``i``.

    ``loss_fn`` may return floats or extended-precision numbers; the difference is taken
    before rounding to float64. The divisor is the representable step
    ``(z_i + h) - (z_i - h)`` rather than ``2h``.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h!r}")
    z = np.array(z, dtype=np.float64)
    grad = np.empty_like(z)
    for i in range(z.size):
        orig = z[i]
        z[i] = hi = orig + h
        fp = loss_fn(z)
        z[i] = lo = orig - h
        fm = loss_fn(z)
        z[i] = orig
        for v in (fp, fm):
            if not math.isfinite(float(v)):
                raise NonFiniteEvaluation(i, float(v))
        grad[i] = float((fp - fm) / (hi - lo))
    return grad


REFERENCE_BITS = 128


def reference_loss(spec, z, target):
    """Loss value at ``softmax(z)`` evaluated in 128-bit MPFR arithmetic.

    Written from the loss definitions only; nothing is shared with the
    float64 implementations it is used to check.
    """
    with gmpy2.context(gmpy2.get_context(), precision=REFERENCE_BITS):
        zs = [mpfr(float(v)) for v in z]
        m = max(zs)
        es = [gmpy2.exp(v - m) for v in zs]
        S = gmpy2.fsum(es)
        logZ = m + gmpy2.log(S)
        kind = spec.kind
        if kind is LossKind.DC:
            a = mpfr(spec.alpha)
            B = gmpy2.fsum(gmpy2.sqrt(e / S * mpfr(float(q))) for e, q in zip(es, target))
            return gmpy2.log(1 - a * (1 - B)) / gmpy2.log(1 - a)
        if kind is LossKind.KL:
            return gmpy2.fsum(
                mpfr(float(q)) * (gmpy2.log(mpfr(float(q))) - (v - logZ))
                for q, v in zip(target, zs)
                if q > 0
            )
        y = int(target)
        value = logZ - zs[y - 1]
        if kind is LossKind.CE:
            return value
        p = [e / S for e in es]
        mu = gmpy2.fsum((i + 1) * pk for i, pk in enumerate(p))
        var = gmpy2.fsum((i + 1 - mu) ** 2 * pk for i, pk in enumerate(p))
        return value + mpfr(spec.lambda1) * (mu - y) ** 2 + mpfr(spec.lambda2) * var


def compare(analytic, numeric):
    """Return (max_abs_err, max_rel_err, worst_index)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    rel = diff / denom
    worst = int(np.argmax(rel))
    return float(diff.max()), float(rel[worst]), worst


def random_case(rng, L, sigma=2.0, zmax=4.0):
    """Logits uniform in [-zmax, zmax] and a Gaussian target at a random bin."""
    z = rng.uniform(-zmax, zmax, size=L)
    y = int(rng.integers(1, L + 1))
    return z, encode_gaussian(y, L, sigma), y


def check(spec, trials=100, tol=1e-5, seed=0, L=10, h=DEFAULT_STEP):
    """Compare analytic and finite-difference gradients on seeded random cases.

    The worst index is reported as a flat position ``trial * L + bin``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    max_abs = max_rel = 0.0
    worst = 0
    for t in range(trials):
        z, q, y = random_case(rng, L)
        target = q if spec.kind in (LossKind.KL, LossKind.DC) else y
        analytic = loss_from_logits(z, target, spec).grad_z
        numeric = finite_diff_grad(lambda v: reference_loss(spec, v, target), z, h)
        a, r, i = compare(analytic, numeric)
        max_abs = max(max_abs, a)
        if r > max_rel:
            max_rel = r
            worst = t * L + i
    return GradCheckReport(max_abs, max_rel, worst, max_rel < tol, trials, tol)


__all__ = [
    "GradCheckReport",
    "LossSpec",
    "NonFiniteEvaluation",
    "check",
    "compare",
    "finite_diff_grad",
    "random_case",
    "reference_loss",
]
