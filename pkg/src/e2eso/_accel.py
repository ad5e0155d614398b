"""Numba switch.

Hot kernels are compiled with ``numba.njit`` unless numba is missing or the
environment variable ``E2ESO_NUMBA`` is set to ``0``/``false``/``off``.  The
flag is read once at import time; the pure-numpy implementations stay
importable either way so both paths can be tested and benchmarked.
"""
import os

_FLAG = os.environ.get("E2ESO_NUMBA", "1").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("0", "false", "off", "no")


def njit(func):
    """Compile ``func`` in nopython mode when numba is available."""
    if not NUMBA_AVAILABLE:
        return func
    return _numba.njit(cache=True)(func)
