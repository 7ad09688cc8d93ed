"""Numba switch.

Set ``CRISP_NO_NUMBA=1`` to run every kernel through its pure-numpy path.
"""
import os

_DISABLED = os.environ.get("CRISP_NO_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False
    _njit = None


def njit(fn):
    """``numba.njit(cache=True)`` when available, otherwise the Python function."""
    if HAS_NUMBA:
        return _njit(cache=True)(fn)
    return fn
