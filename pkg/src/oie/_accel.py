"""Numba switch.

Set ``OIE_DISABLE_NUMBA=1`` in the environment before import to force the
pure-numpy kernels. When numba is not installed the numpy path is used
silently.
"""

import os

_DISABLED = os.environ.get("OIE_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func, **options):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True, **options)(func)
