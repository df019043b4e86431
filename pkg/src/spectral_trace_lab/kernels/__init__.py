"""Hot numeric kernels with a numba path and a pure-numpy path.

The backend is chosen by the ``STLAB_BACKEND`` environment variable
(``numba`` by default, ``numpy`` to force the fallback). Both paths are
importable at all times so tests and the benchmark can compare them.
"""

from .._backend import active_backend
from . import legendre_nb, legendre_np, flow_nb, flow_np


def _pick(name):
    mod = {"numba": (legendre_nb, flow_nb), "numpy": (legendre_np, flow_np)}[active_backend()]
    for m in mod:
        if hasattr(m, name):
            return getattr(m, name)
    raise AttributeError(name)


def plm_table(m, lmax, x):
    """Orthonormal associated Legendre functions P̄_l^m(x), l = m..lmax."""
    return _pick("plm_table")(m, lmax, x)


def plm_flux_table(m, lmax, x, table):
    """(1 - x²) dP̄_l^m/dx for the rows of ``table``."""
    return _pick("plm_flux_table")(m, lmax, x, table)


def geodesic_batch(*args, **kwargs):
    return _pick("geodesic_batch")(*args, **kwargs)
