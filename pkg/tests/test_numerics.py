import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import lpmv

from spectral_trace_lab import numerics as N
from spectral_trace_lab.errors import FitDegenerateError, InvalidArgument, StiffnessError


@given(st.integers(1, 40), st.integers(0, 79))
@settings(max_examples=60, deadline=None)
def test_gauss_legendre_exact_for_degree_2n_minus_1(n, deg):
    deg = min(deg, 2 * n - 1)
    rule = N.gauss_legendre(n, -0.5, 2.0)
    exact = (2.0 ** (deg + 1) - (-0.5) ** (deg + 1)) / (deg + 1)
    assert_allclose(rule.integrate(lambda x: x**deg), exact, rtol=1e-12, atol=1e-12)


def test_gauss_legendre_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        N.gauss_legendre(0)
    with pytest.raises(InvalidArgument):
        N.gauss_legendre(4, 1.0, 0.0)


def test_ode_harmonic_oscillator_full_period():
    res = N.ode_integrate(lambda y: np.array([y[1], -y[0]]), [1.0, 0.0], 2 * math.pi, tol=1e-12)
    assert_allclose(res.y, [1.0, 0.0], atol=1e-10)


def test_ode_dense_samples_match_exact():
    ts = np.linspace(0, 3, 31)
    res = N.ode_integrate(lambda y: np.array([y[1], -y[0]]), [0.0, 1.0], 3.0, tol=1e-12, samples=ts)
    assert_allclose(res.path[:, 0], np.sin(ts), atol=1e-10)


@given(st.floats(0.1, 5.0), st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=20, deadline=None)
def test_ode_reversibility(length, a, b):
    def pendulum(y):
        return np.array([y[1], -np.sin(y[0])])

    fwd = N.ode_integrate(pendulum, [a, b], length, tol=1e-12)
    back = N.ode_integrate(pendulum, fwd.y, -length, tol=1e-12)
    assert_allclose(back.y, [a, b], atol=1e-9)


def test_ode_blowup_raises_with_state():
    with pytest.raises(StiffnessError) as info:
        N.ode_integrate(lambda y: y**2, [1.0], 2.0, tol=1e-10)
    assert info.value.state is not None


def test_ode_tolerance_range():
    with pytest.raises(InvalidArgument):
        N.ode_integrate(lambda y: y, [1.0], 1.0, tol=1e-16)


@given(st.integers(0, 200), st.floats(-1, 1))
@settings(max_examples=80, deadline=None)
def test_legendre_bounded_by_one(l, x):
    assert abs(N.legendre_P(l, x)) <= 1 + 1e-12


def test_legendre_at_zero_closed_form():
    for l in range(0, 30):
        assert_allclose(N.legendre_P_at_zero(l), N.legendre_P(l, 0.0), atol=1e-15)
    assert N.legendre_P_at_zero(2) == -0.5
    assert_allclose(N.legendre_P_at_zero(4), 3 / 8)


def test_assoc_legendre_against_scipy():
    x = np.linspace(-0.99, 0.99, 37)
    for m in (0, 1, 3, 7):
        tab = N.assoc_legendre(m, 20, x)
        for l in range(m, 21):
            norm = math.sqrt((2 * l + 1) / 2 * math.factorial(l - m) / math.factorial(l + m))
            # scipy includes the Condon–Shortley phase
            ref = (-1) ** m * norm * lpmv(m, l, x)
            assert_allclose(tab[l - m], ref, rtol=1e-10, atol=1e-12)


def test_assoc_legendre_orthonormal():
    rule = N.gauss_legendre(80)
    for m in (0, 2, 5):
        tab = N.assoc_legendre(m, 40, rule.nodes)
        gram = (tab * rule.weights) @ tab.T
        assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-12)


def test_assoc_legendre_flux_matches_finite_difference():
    x = np.linspace(-0.9, 0.9, 11)
    h = 1e-6
    flux = N.assoc_legendre_flux(2, 12, x)
    fd = (N.assoc_legendre(2, 12, x + h) - N.assoc_legendre(2, 12, x - h)) / (2 * h)
    assert_allclose(flux, (1 - x**2) * fd, atol=1e-7)


def test_harmonics_gram_matrix_is_identity():
    lmax = 6
    rule = N.gauss_legendre(lmax + 4)
    nphi = 2 * lmax + 4
    phi = 2 * np.pi * np.arange(nphi) / nphi
    T, P = np.meshgrid(np.arccos(rule.nodes), phi, indexing="ij")
    W = np.outer(rule.weights, np.full(nphi, 2 * np.pi / nphi)).ravel()
    Y = N.sph_harm_table(lmax, T.ravel(), P.ravel())
    assert_allclose((Y * W) @ Y.T, np.eye((lmax + 1) ** 2), atol=1e-12)


def test_spherical_harmonic_y10():
    th = np.linspace(0, np.pi, 7)
    assert_allclose(N.spherical_harmonic(1, 0, th, 0.3), math.sqrt(3 / (4 * math.pi)) * np.cos(th), atol=1e-14)


def test_spherical_harmonic_index_checks():
    with pytest.raises(InvalidArgument):
        N.spherical_harmonic(2, 3, 0.1, 0.0)
    with pytest.raises(InvalidArgument):
        N.spherical_harmonic(2, 1, -0.1, 0.0)


def test_fit_laurent_recovers_coefficients():
    t = np.geomspace(1e-3, 1e-2, 9)
    y = 1 / t + 1 / 3 + t / 15
    fit = N.fit_asymptotic(np.column_stack([t, y]), "laurent")
    assert_allclose(fit.coefficients, [1, 1 / 3, 1 / 15], rtol=1e-8)


def test_fit_quadratic_and_inverse():
    t = np.geomspace(1e-3, 1e-1, 7)
    fit = N.fit_asymptotic(np.column_stack([t, 2 - 3 * t + 5 * t**2]), "quadratic")
    assert_allclose(fit.coefficients, [2, -3, 5], atol=1e-9)
    K = np.arange(10.0, 20.0)
    fit = N.fit_asymptotic(np.column_stack([K, 1.5 + 0.25 / K]), "inverse")
    assert_allclose(fit.coefficients, [1.5, 0.25], atol=1e-12)


def test_fit_puiseux_recovers_limit():
    t = np.geomspace(1e-4, 1.6e-3, 9)
    y = 0.7 + 0.2 * np.sqrt(t) - t + 0.3 * t * np.log(t)
    fit = N.fit_asymptotic(np.column_stack([t, y]), "puiseux")
    assert_allclose(fit.coefficients[0], 0.7, atol=1e-10)


def test_fit_rejects_bad_samples():
    t = np.linspace(1, 2, 6)
    with pytest.raises(InvalidArgument):
        N.fit_asymptotic(np.column_stack([t, t]), "quadratic")  # span < 8
    with pytest.raises(InvalidArgument):
        N.fit_asymptotic(np.column_stack([t[:3], t[:3]]), "quadratic")
    with pytest.raises(InvalidArgument):
        N.fit_asymptotic(np.column_stack([t, t]), "cubic")


def test_fit_degenerate_design():
    t = np.full(6, 1e-3)
    with pytest.raises((FitDegenerateError, InvalidArgument)):
        N.fit_asymptotic(np.column_stack([t, t]), "inverse")
