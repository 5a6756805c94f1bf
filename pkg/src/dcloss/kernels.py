"""Batched softmax + loss/logit-gradient kernels.

Every kernel exists twice: a vectorised numpy version and an explicit-loop
version compiled with numba. Both take row-major ``(N, L)`` float64 arrays
and return ``(values[N], grads[N, L])``. Labels are 1-based bin indices.

Use :func:`get_kernels` to pick a backend; the module-level default honours
``DCLOSS_DISABLE_NUMBA``.
"""

import math

import numpy as np

from ._accel import HAS_NUMBA, default_backend, njit


# --------------------------------------------------------------------- numpy


def softmax_rows_np(Z):
    e = np.exp(Z - Z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def dc_rows_np(P, Q, alpha):
    root = np.sqrt(P * Q)
    B = root.sum(axis=1)
    deficit = np.maximum(1.0 - B, 0.0)
    denom = 1.0 - alpha * deficit
    values = np.log1p(-alpha * deficit) / math.log1p(-alpha)
    scale = alpha / (2.0 * math.log1p(-alpha)) / denom
    G = scale[:, None] * (root - P * B[:, None])
    return values, G


def kl_rows_np(P, Q):
    pos = Q > 0
    safe_q = np.where(pos, Q, 1.0)
    with np.errstate(divide="ignore"):
        terms = np.where(pos, Q * (np.log(safe_q) - np.log(P)), 0.0)
    return terms.sum(axis=1), P - Q


def _logsumexp_rows_np(Z):
    m = Z.max(axis=1)
    return m + np.log(np.exp(Z - m[:, None]).sum(axis=1))


def ce_rows_np(Z, P, labels):
    idx = labels - 1
    rows = np.arange(P.shape[0])
    # -log p_y through log-softmax: finite even where p_y underflows
    values = _logsumexp_rows_np(Z) - Z[rows, idx]
    G = P.copy()
    G[rows, idx] -= 1.0
    return values, G


def cemv_rows_np(Z, P, labels, lambda1, lambda2):
    values, G = ce_rows_np(Z, P, labels)
    bins = np.arange(1, P.shape[1] + 1, dtype=np.float64)
    mu = P @ bins
    centred = bins[None, :] - mu[:, None]
    var = (P * centred * centred).sum(axis=1)
    err = mu - labels
    values = values + lambda1 * err * err + lambda2 * var
    G += 2.0 * lambda1 * err[:, None] * P * centred
    G += lambda2 * P * (centred * centred - var[:, None])
    return values, G


# ---------------------------------------------------------------- loop/numba


def _softmax_rows_loop(Z):
    N, L = Z.shape
    P = np.empty((N, L))
    for n in range(N):
        m = Z[n, 0]
        for i in range(1, L):
            if Z[n, i] > m:
                m = Z[n, i]
        s = 0.0
        for i in range(L):
            e = math.exp(Z[n, i] - m)
            P[n, i] = e
            s += e
        for i in range(L):
            P[n, i] /= s
    return P


def _dc_rows_loop(P, Q, alpha):
    N, L = P.shape
    values = np.empty(N)
    G = np.empty((N, L))
    log_keep = math.log1p(-alpha)
    k = alpha / (2.0 * log_keep)
    for n in range(N):
        B = 0.0
        for i in range(L):
            r = math.sqrt(P[n, i] * Q[n, i])
            G[n, i] = r
            B += r
        deficit = 1.0 - B
        if deficit < 0.0:
            deficit = 0.0
        values[n] = math.log1p(-alpha * deficit) / log_keep
        scale = k / (1.0 - alpha * deficit)
        for i in range(L):
            G[n, i] = scale * (G[n, i] - P[n, i] * B)
    return values, G


def _kl_rows_loop(P, Q):
    N, L = P.shape
    values = np.empty(N)
    G = np.empty((N, L))
    for n in range(N):
        s = 0.0
        for i in range(L):
            q = Q[n, i]
            if q > 0.0:
                p = P[n, i]
                s += q * (math.log(q) - math.log(p)) if p > 0.0 else math.inf
            G[n, i] = P[n, i] - q
        values[n] = s
    return values, G


def _logsumexp_row(Z, n):
    L = Z.shape[1]
    m = Z[n, 0]
    for i in range(1, L):
        if Z[n, i] > m:
            m = Z[n, i]
    s = 0.0
    for i in range(L):
        s += math.exp(Z[n, i] - m)
    return m + math.log(s)


# called from the CE loops, so it must be compiled before them
_logsumexp_row = njit(_logsumexp_row)


def _ce_rows_loop(Z, P, labels):
    N, L = P.shape
    values = np.empty(N)
    G = np.empty((N, L))
    for n in range(N):
        y = labels[n] - 1
        values[n] = _logsumexp_row(Z, n) - Z[n, y]
        for i in range(L):
            G[n, i] = P[n, i]
        G[n, y] -= 1.0
    return values, G


def _cemv_rows_loop(Z, P, labels, lambda1, lambda2):
    N, L = P.shape
    values = np.empty(N)
    G = np.empty((N, L))
    for n in range(N):
        y = labels[n] - 1
        values[n] = _logsumexp_row(Z, n) - Z[n, y]
        for i in range(L):
            G[n, i] = P[n, i]
        G[n, y] -= 1.0
        mu = 0.0
        for i in range(L):
            mu += (i + 1) * P[n, i]
        var = 0.0
        for i in range(L):
            c = (i + 1) - mu
            var += P[n, i] * c * c
        err = mu - labels[n]
        values[n] += lambda1 * err * err + lambda2 * var
        for i in range(L):
            c = (i + 1) - mu
            G[n, i] += 2.0 * lambda1 * err * P[n, i] * c + lambda2 * P[n, i] * (c * c - var)
    return values, G


softmax_rows_nb = njit(_softmax_rows_loop)
dc_rows_nb = njit(_dc_rows_loop)
kl_rows_nb = njit(_kl_rows_loop)
ce_rows_nb = njit(_ce_rows_loop)
cemv_rows_nb = njit(_cemv_rows_loop)


NUMPY_KERNELS = {
    "softmax": softmax_rows_np,
    "dc": dc_rows_np,
    "kl": kl_rows_np,
    "ce": ce_rows_np,
    "ce_mv": cemv_rows_np,
}

NUMBA_KERNELS = {
    "softmax": softmax_rows_nb,
    "dc": dc_rows_nb,
    "kl": kl_rows_nb,
    "ce": ce_rows_nb,
    "ce_mv": cemv_rows_nb,
}


def get_kernels(backend=None):
    backend = backend or default_backend()
    if backend == "numpy":
        return NUMPY_KERNELS
    if backend == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return NUMBA_KERNELS
    raise ValueError(f"unknown backend {backend!r}")
