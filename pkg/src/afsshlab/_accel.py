"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible numpy subset and wrapped
with :func:`njit`.  Setting ``AFSSHLAB_DISABLE_NUMBA=1`` (or running without
numba installed) leaves them as plain Python/numpy functions, which is slow but
numerically equivalent.
"""

from __future__ import annotations

import os

__all__ = ["njit", "USE_NUMBA", "backend_name"]


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


try:  # pragma: no cover - import guard
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USE_NUMBA = _numba is not None and not _flag_set("AFSSHLAB_DISABLE_NUMBA")


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
