"""Optional numba acceleration.

Set ``PREDICTIVE_CACC_NO_NUMBA=1`` to force the pure-numpy code paths (useful
for debugging and for comparing both backends).
"""
import os

try:
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is too old and only produces a warning
        numba.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
    prange = numba.prange
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    prange = range

USE_NUMBA = HAVE_NUMBA and os.environ.get("PREDICTIVE_CACC_NO_NUMBA", "0").lower() not in ("1", "true", "yes")


def njit(func=None, **options):
    """Compile with numba when it is installed, otherwise hand the function back.

    The undecorated python function stays reachable as ``.py_func`` either way.
    """
    def wrap(f):
        if HAVE_NUMBA:
            return numba.njit(cache=True, **options)(f)
        f.py_func = f
        return f

    if func is None:
        return wrap
    return wrap(func)
