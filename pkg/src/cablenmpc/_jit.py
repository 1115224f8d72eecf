"""Optional numba acceleration.

Kernels are written in the subset of numpy that numba's nopython mode
understands, so the same source runs either compiled or interpreted.
Set ``CABLENMPC_DISABLE_NUMBA=1`` to force the interpreted numpy path.
"""
import os

_flag = os.environ.get("CABLENMPC_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = _flag not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def kernel(fn):
    """Compile ``fn`` with ``numba.njit`` when acceleration is enabled."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
