import numpy as np
import pytest
from numpy.testing import assert_allclose

from spectral_trace_lab import _backend, geodesics, kernels
from spectral_trace_lab.kernels import legendre_nb, legendre_np


def test_env_flag_selects_backend(monkeypatch):
    monkeypatch.setenv("STLAB_BACKEND", "numpy")
    assert _backend.active_backend() == "numpy"
    monkeypatch.setenv("STLAB_BACKEND", "numba")
    assert _backend.active_backend() == ("numba" if _backend.HAVE_NUMBA else "numpy")
    monkeypatch.setenv("STLAB_BACKEND", "fortran")
    with pytest.raises(ValueError):
        _backend.active_backend()


@pytest.mark.parametrize("m", [0, 1, 5, 30])
def test_legendre_backends_agree(m):
    x = np.cos(np.linspace(0.01, np.pi - 0.01, 301))
    a = legendre_nb.plm_table(m, 120, x)
    b = legendre_np.plm_table(m, 120, x)
    assert_allclose(a, b, atol=1e-12)
    assert_allclose(legendre_nb.plm_flux_table(m, 120, x, a), legendre_np.plm_flux_table(m, 120, x, b), atol=1e-10)


def test_dispatch_follows_flag(monkeypatch):
    x = np.linspace(-0.9, 0.9, 5)
    monkeypatch.setenv("STLAB_BACKEND", "numpy")
    a = kernels.plm_table(2, 10, x)
    monkeypatch.setenv("STLAB_BACKEND", "numba")
    b = kernels.plm_table(2, 10, x)
    assert_allclose(a, b, atol=1e-13)


def test_closure_census_same_on_both_backends(monkeypatch, zoll):
    monkeypatch.setenv("STLAB_BACKEND", "numpy")
    a = geodesics.closure_census(zoll, n=8, seed=4, n_steps=512)
    monkeypatch.setenv("STLAB_BACKEND", "numba")
    b = geodesics.closure_census(zoll, n=8, seed=4, n_steps=512)
    assert_allclose(a.residuals, b.residuals, atol=1e-12)


def test_chart_switching_agrees(control):
    # paths through the poles force several chart switches in both kernels
    starts = [geodesics.lift_to_cosphere(control, (np.pi / 2, 0.0), a) for a in (0.0, 0.05, 0.1)]
    states = np.array([[s.u1, s.u2, s.p1, s.p2] for s in starts])
    axes = np.zeros(3, dtype=np.int64)
    polys = geodesics.kernel_polys(control.profile)
    from spectral_trace_lab.kernels import flow_nb, flow_np

    a = flow_nb.geodesic_batch(polys, states, axes, 2 * np.pi, 64, 16, False)
    b = flow_np.geodesic_batch(polys, states, axes, 2 * np.pi, 64, 16, False)
    assert_allclose(a[0], b[0], atol=1e-12)
    assert np.max(np.abs(a[0][0, :, 2])) > 0.999  # the meridian really passes a pole
