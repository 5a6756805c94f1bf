"""Backend selection for the hot per-sample kernels.

Set ``DCLOSS_DISABLE_NUMBA=1`` to force the pure-numpy path. When numba is
not importable the numpy path is used regardless.
"""

import os

try:
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False
    _njit = None

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_DISABLED = os.environ.get("DCLOSS_DISABLE_NUMBA", "").strip().lower() not in _FALSY
USE_NUMBA = HAS_NUMBA and not NUMBA_DISABLED


def njit(fn):
    """Compile ``fn`` with numba (no parallelism, cached) if available."""
    if not HAS_NUMBA:
        return fn
    # parallel=False keeps reductions in a fixed order -> bit-reproducible
    return _njit(cache=True, fastmath=False)(fn)


def default_backend():
    return "numba" if USE_NUMBA else "numpy"
