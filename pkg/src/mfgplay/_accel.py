"""Numba switch.

Set ``MFG_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging and for checking that both backends agree).
"""

import os

_DISABLE = os.environ.get("MFG_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLE:
        raise ImportError("numba disabled by MFG_DISABLE_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def jit(func):
    """Compile ``func`` with numba when enabled, otherwise return it unchanged."""
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
