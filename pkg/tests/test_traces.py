import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from spectral_trace_lab import geometry as G
from spectral_trace_lab import spectra as S
from spectral_trace_lab import traces as T
from spectral_trace_lab.errors import (
    AsymptoteMismatchWarning,
    ExtrapolationError,
    InvalidArgument,
    TailBoundError,
)


def test_round_theta_near_asymptote():
    # the next term of the expansion is 4t²/315
    F = T.ThetaSeries.round_sphere()
    for t in (0.05, 0.02, 0.01):
        gap = F(t) - (1 / t + 1 / 3 + t / 15)
        assert abs(gap) <= 0.015 * t * t
        assert abs(gap - 4 * t * t / 315) <= 0.01 * t**3


def test_theta_large_t():
    assert_allclose(T.ThetaSeries.round_sphere()(50.0), 1.0, atol=1e-12)
    assert_allclose(T.theta_eval(S.sphere_galerkin(None, 20), 50.0), 1.0, atol=1e-12)


def test_theta_shift_law():
    base = S.sphere_galerkin(None, 60)
    c = 0.4
    shifted = base.shifted(c)
    for t in (0.05, 0.2, 1.0):
        assert_allclose(T.theta_eval(shifted, t), T.theta_eval(base, t) * math.exp(-c * t), rtol=1e-13)


def test_theta_truncated_spectrum_matches_exact():
    th = T.ThetaSeries(S.sphere_galerkin(None, 60))
    F = T.ThetaSeries.round_sphere()
    for t in (0.01, 0.1):
        assert_allclose(th(t), F(t), rtol=1e-12)


def test_theta_strictly_decreasing():
    F = T.ThetaSeries.round_sphere()
    t = np.geomspace(1e-3, 10, 30)
    assert np.all(np.diff([F(x) for x in t]) < 0)


def test_theta_tail_error_reports_t_min():
    th = T.ThetaSeries(S.sphere_galerkin(None, 20))
    with pytest.raises(TailBoundError) as info:
        th(1e-3)
    t_min = info.value.t_min
    assert 1e-3 < t_min < 0.2
    th(1.01 * t_min)  # usable just above the reported minimum


def test_theta_rejects_nonpositive_t():
    with pytest.raises(InvalidArgument):
        T.ThetaSeries.round_sphere()(0.0)


def test_fit_round_heat_coefficients():
    fit = T.fit_heat_coefficients(T.ThetaSeries.round_sphere())
    assert_allclose(fit.coefficients.as_tuple(), (1, 1 / 3, 1 / 15), atol=1e-4)


@pytest.mark.parametrize("c", [-1.0, 0.3, 2.0])
def test_fit_constant_potential_matches_zeta(c, round_metric):
    # the t² term of e^{-ct}F(t) grows like c³, so a deeper spectrum keeps the grid small
    mu = S.sphere_galerkin(G.constant_field(c), 400)
    fit = T.fit_heat_coefficients(T.ThetaSeries(mu, "M"))
    ref = G.heat_coefficients_from_zeta(round_metric, G.constant_field(c), "M")
    assert_allclose(fit.coefficients.as_tuple(), ref.as_tuple(), atol=5e-3)
    # and the closed form of e^{-ct}F(t)
    assert_allclose(ref.as_tuple(), (1, 1 / 3 - c, 1 / 15 - c / 3 + c * c / 2), atol=1e-10)


def test_fit_warns_on_bad_grid():
    th = T.ThetaSeries.round_sphere()
    with pytest.warns(AsymptoteMismatchWarning):
        T.fit_heat_coefficients(th, np.geomspace(0.5, 4.0, 9))


def test_zoll_heat_fit_against_zeta(zoll):
    lam = S.revolution_spectrum(zoll, None, 200)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AsymptoteMismatchWarning)
        fit = T.fit_heat_coefficients(T.ThetaSeries(lam, "L")).coefficients
    z = G.zeta_values(zoll)
    assert abs(fit.h1 - 1 / 3) < 2e-3
    assert abs(fit.h2 + z.zeta1) < 5e-3


def test_subtraction_constants(round_metric, zoll):
    c = T.subtraction_constants(round_metric)
    assert_allclose([c.a0, c.b0, c.c0], 0.0, atol=1e-12)
    c = T.subtraction_constants(round_metric, G.constant_field(0.7))
    assert_allclose([c.a0, c.b0, c.c0], [0.0, 0.7, 0.7], atol=1e-10)
    c = T.subtraction_constants(zoll, G.cos_potential(0.5))
    assert abs(c.a0) < 1e-7


@pytest.mark.parametrize("c", [0.0, -1.0, 2.0])
def test_partial_sums_vanish_for_constant(c):
    sp = S.sphere_galerkin(G.constant_field(c), 40)
    ps = T.regularized_partial_sum(sp, c)
    assert np.max(np.abs(ps.S)) < 1e-10


def test_partial_sums_odd_potential_extrapolation():
    sp = S.sphere_galerkin(G.cos_potential(0.5), 120)
    ps = T.regularized_partial_sum(sp, 0.0)
    ex = T.extrapolate_partial_sums(ps)
    assert abs(ex.limit + 0.25 / (8 * math.pi)) < 2e-4
    ks, d = T.cluster_deficits(sp, 0.0)
    ab = T.abel_extrapolate([(t, T.abel_sum(sp, 0.0, t, (ks, d))) for t in T.default_abel_grid(T.abel_t_min(ks, d))])
    assert abs(ab.limit - ex.limit) < 1e-4


def test_partial_sum_rejects_unreliable_K():
    sp = S.sphere_galerkin(None, 20)
    with pytest.raises(InvalidArgument):
        T.regularized_partial_sum(sp, 0.0, K=sp.k_max_reliable + 1)


def test_abel_zero_deficits():
    sp = S.sphere_galerkin(None, 30)
    grid = T.default_abel_grid()
    samples = [(t, T.abel_sum(sp, 0.0, t)) for t in grid]
    assert_allclose([g for _, g in samples], 0.0, atol=1e-15)
    assert abs(T.abel_extrapolate(samples).limit) < 1e-15


def test_abel_parameter_range():
    sp = S.sphere_galerkin(None, 30)
    with pytest.raises(InvalidArgument):
        T.abel_sum(sp, 0.0, 1e-5)
    with pytest.raises(InvalidArgument):
        T.abel_sum(sp, 0.0, 0.5)


def _inverse_square_samples(t_grid):
    k = np.arange(1, 200001, dtype=float)
    return np.array([(t, np.sum(np.exp(-k * (k + 1) * t) / k**2)) for t in t_grid])


def test_abel_synthetic_inverse_squares_puiseux():
    samples = _inverse_square_samples(T.default_abel_grid(1e-4))
    ex = T.abel_extrapolate(samples, model="puiseux")
    assert abs(ex.limit - math.pi**2 / 6) < 1e-4


def test_abel_synthetic_inverse_squares_quadratic_refuses():
    # G(t) = π²/6 - O(√t) here, which the quadratic model cannot represent
    samples = _inverse_square_samples(T.default_abel_grid(1e-4))
    with pytest.raises(ExtrapolationError):
        T.abel_extrapolate(samples, model="quadratic")


def test_abel_tail_guard():
    sp = S.sphere_galerkin(G.cos_potential(0.5), 40)
    ks, d = T.cluster_deficits(sp, 0.0)
    with pytest.raises(TailBoundError) as info:
        T.abel_sum(sp, 0.0, 1e-4)
    assert_allclose(info.value.t_min, T.abel_t_min(ks, d))


def test_sf_constant_potential():
    c = 0.8
    sf = T.sf_constants(G.constant_field(c))
    assert_allclose(sf.integral_spectral, 8 * math.pi**3 * c * c, rtol=1e-8)
    assert_allclose(sf.integral_direct, 8 * math.pi**3 * c * c, rtol=1e-8)
    assert abs(sf.c1) < 1e-12


def test_sf_odd_potential():
    q = G.harmonic_field({(1, 0): 0.3, (3, 1): 0.2, (5, -4): 0.1})
    sf = T.sf_constants(q)
    int_q2 = 0.09 + 0.04 + 0.01
    assert_allclose(2 * sf.c1, -int_q2 / (8 * math.pi), atol=1e-12)


def test_sf_y20():
    sf = T.sf_constants(G.harmonic_field({(2, 0): 1.0}))
    assert_allclose(sf.c1, -(3 / 4) / (16 * math.pi), atol=1e-12)
    assert sf.relative_agreement < 1e-6


def _random_potential(seed, band=6):
    rng = np.random.default_rng(seed)
    table = {}
    for l in range(1, band + 1):
        for m in range(-l, l + 1):
            if rng.random() < 0.3:
                table[(l, m)] = rng.normal(scale=0.3)
    table.setdefault((2, 0), 0.2)
    return G.harmonic_field(table)


@given(st.integers(0, 10_000))
@settings(max_examples=4, deadline=None)
def test_theorem_rhs_equals_two_c1(seed):
    metric = G.builtin_metric("round-sphere")
    q = _random_potential(seed)
    rhs = T.theorem_rhs(metric, q, liouville=(16, 16, 24))
    sf = T.sf_constants(q)
    assert abs(rhs.value - 2 * sf.c1) < 1e-8
    assert sf.relative_agreement < 1e-6


def test_theorem_rhs_examples(round_metric):
    for c in (-1.0, 0.3, 2.0):
        assert abs(T.theorem_rhs(round_metric, G.constant_field(c)).value) < 1e-10
    q = G.cos_potential(0.5)
    rhs = T.theorem_rhs(round_metric, q)
    assert_allclose(rhs.value, -0.25 / (8 * math.pi), atol=1e-10)
    assert rhs.value == T._sum_terms(rhs.terms)
    assert list(rhs.terms) == list(T.RHS_TERMS)


@pytest.mark.parametrize("c", [-1.0, 0.3, 2.0])
def test_verify_trace_constant_potential(round_metric, c):
    rep = T.verify_trace(round_metric, G.constant_field(c), T.TraceConfig(L_max=40))
    assert rep.discrepancy <= 1e-9
    assert rep.discrepancy_partial <= 1e-9
    # the (otvet3) form with γ = K reproduces the theorem; with γ = K-1 it is off by b₀l₁
    assert rep.otvet3["gamma=K"]["discrepancy"] < 1e-9
    assert_allclose(rep.otvet3["gamma=K"]["value"] - rep.otvet3["gamma=K-1"]["value"], c / 3, atol=1e-9)


def test_verify_trace_round_free(round_metric):
    rep = T.verify_trace(round_metric, None, T.TraceConfig(L_max=30, fit_heat=False))
    assert rep.discrepancy <= 1e-10
    d = rep.to_dict()
    assert set(d["rhs_terms"]) == set(T.RHS_TERMS)
    assert d["diagnostics"]["k_max_reliable"] == rep.diagnostics["k_max_reliable"]
