"""Numba toggle.

Set ``WINDPLAN_NUMBA=0`` to force the pure-numpy kernels (useful for
debugging and for checking that both paths agree).
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("WINDPLAN_NUMBA", "1") not in ("0", "false", "no")


def njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
