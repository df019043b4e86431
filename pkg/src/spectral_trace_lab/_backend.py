"""Kernel backend selection.

Hot loops are written once as plain Python over numpy arrays and compiled
with ``numba.njit`` unless ``STLAB_BACKEND=numpy`` is set (or numba is
missing). The numpy backend uses separately written vectorized kernels, so
the two paths can be checked against each other.
"""

import os

BACKEND_ENV = "STLAB_BACKEND"

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def requested_backend():
    value = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {value!r}")
    return value


def active_backend():
    if requested_backend() == "numba" and HAVE_NUMBA:
        return "numba"
    return "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, cache=True, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def set_threads(n):
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
