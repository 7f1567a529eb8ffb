"""Backend switch for the hot kernels.

Set ``SFFLAB_NUMBA=0`` in the environment to force the pure-numpy path.
"""
import logging
import os

_flag = os.environ.get("SFFLAB_NUMBA", "1").strip().lower()

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _flag not in ("0", "false", "no", "off")


def njit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
