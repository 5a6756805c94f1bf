"""Scalar age labels <-> one-hot vectors and Gaussian label distributions.

Labels are 1-based bin indices ``y in [1, L]``. Real ages starting at 0 are
mapped onto bins with :func:`age_to_bin` (default offset 1, so ages 0..100
occupy bins 1..101).
"""

import numpy as np

from .errors import DomainError

DEFAULT_BINS = 101
DEFAULT_SIGMA = 2.0
AGE_OFFSET = 1


def _check_label(label, L):
    if L < 2:
        raise DomainError(f"need at least 2 bins, got L={L}")
    if int(label) != label or not 1 <= label <= L:
        raise DomainError(f"label {label!r} outside [1, {L}]")
    return int(label)


def age_to_bin(age, offset=AGE_OFFSET):
    return int(age) + offset


def bin_to_age(label, offset=AGE_OFFSET):
    return int(label) - offset


def encode_gaussian(label, L=DEFAULT_BINS, sigma=DEFAULT_SIGMA):
    """Discrete Gaussian centred on ``label`` over bins ``1..L``.

    The kernel is evaluated on the integer grid and renormalised, so the
    result sums to one exactly up to rounding and its argmax is ``label``.
    """
    y = _check_label(label, L)
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    d = np.arange(1, L + 1, dtype=np.float64) - y
    logk = -(d * d) / (2.0 * sigma * sigma)
    # shift by the max (0 at the centre) so tiny sigma cannot underflow to all-zero
    k = np.exp(logk - logk.max())
    return k / k.sum()


def encode_gaussian_batch(labels, L=DEFAULT_BINS, sigma=DEFAULT_SIGMA):
    labels = np.asarray(labels)
    out = np.empty((labels.shape[0], L))
    for n, y in enumerate(labels):
        out[n] = encode_gaussian(int(y), L, sigma)
    return out


def encode_onehot(label, L=DEFAULT_BINS):
    y = _check_label(label, L)
    bits = np.zeros(L, dtype=np.int8)
    bits[y - 1] = 1
    return bits


def decode_argmax(p):
    """Most probable bin (1-based); ties resolve to the smallest index."""
    p = np.asarray(p)
    if p.ndim != 1 or p.size == 0:
        raise DomainError("expected a non-empty 1-d distribution")
    # np.argmax returns the first occurrence of the maximum
    return int(np.argmax(p)) + 1


def decode_argmax_batch(P):
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[1] == 0:
        raise DomainError("expected a non-empty (N, L) array")
    return np.argmax(P, axis=1) + 1
