"""Numba switch.

Set ``HOMOG_NUMBA=0`` to force the pure-numpy code paths (useful for
debugging and for the benchmark). Numba is used whenever it imports and the
flag is not off.
"""
import os

_OFF = {"0", "false", "off", "no"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_REQUESTED = os.environ.get("HOMOG_NUMBA", "1").strip().lower() not in _OFF
NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_REQUESTED and NUMBA_AVAILABLE


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    Kernels are always compiled when numba exists so the benchmark can time
    both paths in one process; ``NUMBA_ENABLED`` only decides dispatch.
    """
    if numba is None:
        return func
    return numba.njit(cache=True)(func)
