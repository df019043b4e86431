import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spectral_trace_lab import geodesics as GD
from spectral_trace_lab import geometry as G
from spectral_trace_lab.errors import ClosureError, InvalidArgument
from spectral_trace_lab.kernels import flow_nb, flow_np

TWO_PI = 2 * math.pi


def test_lift_examples(round_metric):
    p = GD.lift_to_cosphere(round_metric, (math.pi / 2, 0.0), 0.0)
    assert_allclose([p.p1, p.p2], [1.0, 0.0], atol=1e-15)
    p = GD.lift_to_cosphere(round_metric, (math.pi / 2, 0.0), math.pi / 2)
    assert_allclose([p.p1, p.p2], [0.0, 1.0], atol=1e-15)


def test_lift_is_unit(zoll, rng):
    for th, ph, a in rng.uniform([0.2, 0, 0], [2.9, TWO_PI, TWO_PI], size=(20, 3)):
        assert abs(GD.lift_to_cosphere(zoll, (th, ph), a).hamiltonian(zoll) - 0.5) < 1e-12


def test_flow_rejects_unnormalized_start(round_metric):
    with pytest.raises(InvalidArgument):
        GD.geodesic_flow(round_metric, GD.PhasePoint(1.0, 0.0, 2.0, 0.0, "z"))


def test_round_equator_closes(round_metric):
    path = GD.geodesic_flow(round_metric, GD.lift_to_cosphere(round_metric, (math.pi / 2, 0.0), math.pi / 2))
    assert path.closure_residual < 1e-9
    assert path.hamiltonian_drift < 1e-8


def test_round_meridian_switches_chart(round_metric):
    path = GD.geodesic_flow(round_metric, GD.lift_to_cosphere(round_metric, (math.pi / 2, 0.0), 0.0))
    assert path.closure_residual < 1e-9
    assert set(path.charts) == {"z", "x"}
    # great circle through the poles stays in the plane y = 0
    assert_allclose(path.positions[:, 1], 0.0, atol=1e-9)


def test_zoll_paths_are_unit_speed(zoll):
    start = GD.lift_to_cosphere(zoll, (1.0, 0.3), 0.7)
    path = GD.geodesic_flow(zoll, start)
    assert path.hamiltonian_drift < 1e-8
    assert path.closure_residual < 1e-6


def test_closure_census_zoll_and_control(zoll, control):
    assert GD.closure_census(zoll, n=100, seed=1).certified()
    census = GD.closure_census(control, n=100, seed=1)
    assert census.max_residual > 1e-2
    assert not census.certified()


@pytest.mark.parametrize("eps", [0.05, 0.2])
def test_closure_census_other_eps(eps):
    metric = G.builtin_metric("zoll-of-revolution", eps=eps)
    assert GD.closure_census(metric, n=40, seed=2).max_residual < 1e-6


def test_round_jacobi_fields(round_metric):
    path = GD.geodesic_flow(round_metric, GD.lift_to_cosphere(round_metric, (1.1, 0.2), 0.4))
    jac = GD.jacobi_solve(round_metric, path)
    assert_allclose(jac.u_sol, np.cos(jac.r), atol=1e-9)
    assert_allclose(jac.v_sol, np.sin(jac.r), atol=1e-9)
    assert jac.wronskian_drift < 1e-7
    assert jac.J is jac.v_sol


def test_zoll_jacobi_matches_geodesic_variation(zoll):
    # v(r) is the normal separation rate of geodesics fanning out from one point
    point, angle, d = (1.2, 0.4), 0.9, 1e-4
    base = GD.geodesic_flow(zoll, GD.lift_to_cosphere(zoll, point, angle), samples_per_period=64)
    jac = GD.jacobi_solve(zoll, base)
    assert jac.wronskian_drift < 1e-7
    plus = GD.geodesic_flow(zoll, GD.lift_to_cosphere(zoll, point, angle + d), samples_per_period=64)
    minus = GD.geodesic_flow(zoll, GD.lift_to_cosphere(zoll, point, angle - d), samples_per_period=64)
    dpos = (plus.positions - minus.positions) / (2 * d)
    checked = 0
    for i in range(1, base.r.size):
        if base.charts[i] != "z":
            continue
        th, ph = base.states[i, :2]
        e_t, e_p = G.chart_frame("z", th, ph)
        # ambient displacement → chart displacement via the dual of the coordinate frame
        M = np.column_stack([e_t, e_p])
        du = np.linalg.lstsq(M, dpos[i], rcond=None)[0]
        A, B, C = zoll.coefficients(th, ph)
        norm = math.sqrt(A * du[0] ** 2 + 2 * B * du[0] * du[1] + C * du[1] ** 2)
        assert abs(norm - abs(jac.v_sol[i])) < 1e-4
        checked += 1
    assert checked > 20


def test_normal_derivative_vanishes_on_round(round_metric):
    path = GD.geodesic_flow(round_metric, GD.lift_to_cosphere(round_metric, (1.0, 0.0), 0.3))
    for r in (0.0, 1.0, 4.0):
        assert abs(GD.normal_curvature_derivative(round_metric, path, r)) < 1e-9


def test_normal_derivative_two_stencils(zoll):
    path = GD.geodesic_flow(zoll, GD.lift_to_cosphere(zoll, (1.0, 0.2), 0.8))
    a = GD.normal_curvature_derivative(zoll, path, 1.0, step=1e-5)
    b = GD.normal_curvature_derivative(zoll, path, 1.0, step=1e-4)
    assert abs(a - b) < 1e-5
    assert abs(a) > 1e-3


def test_normal_derivative_rejects_r_outside(zoll):
    path = GD.geodesic_flow(zoll, GD.lift_to_cosphere(zoll, (1.0, 0.2), 0.8), length=1.0)
    with pytest.raises(InvalidArgument):
        GD.normal_curvature_derivative(zoll, path, 2.0)


def test_round_sigma_vanishes(round_metric):
    s = GD.zelditch_sigma(round_metric, GD.lift_to_cosphere(round_metric, (1.0, 0.0), 0.3), n_samples=256)
    assert np.max(np.abs(s.sigma)) < 1e-9


def test_equatorial_sigma_bracket_closed_form():
    # along the equator K = 1, u = cos r, v = sin r and |K_ν| = 3ε is constant,
    # so the bracket is κ²[cos³r(2/3 - cos r + cos³r/3)/3 - cos²r sin⁴r/3], κ = 3ε
    eps = 0.1
    metric = G.builtin_metric("zoll-of-revolution", eps=eps)
    s = GD.zelditch_sigma(metric, GD.lift_to_cosphere(metric, (math.pi / 2, 0.0), math.pi / 2))
    r, k = s.r, 3 * eps
    c, sn = np.cos(r), np.sin(r)
    bracket = k * k * (c**3 * (2 / 3 - c + c**3 / 3) / 3 - c**2 * sn**4 / 3)
    assert_allclose(np.abs(s.normal_derivative), k, atol=1e-8)
    assert_allclose(s.curvature, 1.0, atol=1e-10)
    assert_allclose(s.bracket, bracket, atol=1e-7)
    assert_allclose(s.sigma, 0.25 * (s.curvature - 1 + bracket), atol=1e-7)


def test_sigma_first_order_in_eps():
    ratios = []
    for eps in (0.02, 0.04, 0.08):
        metric = G.builtin_metric("zoll-of-revolution", eps=eps)
        s = GD.zelditch_sigma(metric, GD.lift_to_cosphere(metric, (1.0, 0.3), 0.6), n_samples=512)
        ratios.append(np.max(np.abs(s.sigma)) / eps)
    assert max(ratios) / min(ratios) < 1.2


def test_sigma_refuses_open_geodesic(control):
    with pytest.raises(ClosureError):
        GD.zelditch_sigma(control, GD.lift_to_cosphere(control, (1.0, 0.0), 0.5), n_samples=256)


def test_batch_sigma_matches_path_sigma(zoll):
    start = GD.lift_to_cosphere(zoll, (1.0, 0.3), 0.6)
    s = GD.zelditch_sigma(zoll, start, n_samples=2048)
    flow = GD.batch_flow(zoll, [start], n_out=2048, n_sub=2, jacobi=True)
    assert flow.closure_residuals[0] < 1e-6
    assert_allclose(flow.sigma()[0], s.sigma, atol=1e-6)


def test_flow_average_constant(zoll):
    start = GD.lift_to_cosphere(zoll, (0.8, 1.0), 2.0)
    assert_allclose(GD.flow_average(zoll, G.constant_field(2.5), start), 2.5, atol=1e-12)


def test_flow_average_odd_vanishes_on_round(round_metric, rng):
    q = G.harmonic_field({(1, 0): 0.4, (3, 1): 0.3, (5, -2): 0.2})
    for th, ph, a in rng.uniform([0.2, 0, 0], [2.9, TWO_PI, TWO_PI], size=(50, 3)):
        start = GD.lift_to_cosphere(round_metric, (th, ph), a)
        assert abs(GD.flow_average(round_metric, q, start, n_samples=64)) < 1e-9


def _great_circle_average(f, point, direction, n=400):
    t = TWO_PI * np.arange(n) / n
    pts = np.cos(t) * point[:, None] + np.sin(t) * direction[:, None]
    return float(np.mean(f.at_points(pts)))


def test_funk_oracle_y20(round_metric):
    q = G.harmonic_field({(2, 0): 1.0})
    th, ph, a = 1.1, 0.4, 0.7
    start = GD.lift_to_cosphere(round_metric, (th, ph), a)
    omega = G.embed("z", th, ph)
    e_t, e_p = G.chart_frame("z", th, ph)
    direction = math.cos(a) * e_t + math.sin(a) * e_p / math.sin(th)
    pole = np.cross(omega, direction)
    direct = _great_circle_average(q, omega, direction)
    assert_allclose(direct, -0.5 * q.at_points(pole[:, None])[0], atol=1e-12)
    assert_allclose(GD.flow_average(round_metric, q, start), direct, atol=1e-10)


def test_flow_average_is_orbit_invariant(zoll, rng):
    q = G.harmonic_field({(2, 0): 0.5, (2, 1): 0.3, (4, 2): 0.2})
    start = GD.lift_to_cosphere(zoll, (1.0, 0.2), 0.9)
    ref = GD.flow_average(zoll, q, start)
    for s in rng.uniform(0.3, 6.0, 3):
        moved = GD.geodesic_flow(zoll, start, length=s, samples_per_period=16).phase_point(-1)
        assert abs(GD.flow_average(zoll, q, moved) - ref) < 1e-9


def test_liouville_constant(zoll):
    res = GD.liouville_mean_square(zoll, G.constant_field(1.5), 8, 8, 8)
    assert_allclose(res.value, 2.25, atol=1e-10)


def test_liouville_y20_funk_hecke(round_metric):
    res = GD.liouville_mean_square(round_metric, G.harmonic_field({(2, 0): 1.0}))
    assert_allclose(res.value, 1 / (16 * math.pi), atol=1e-8)
    assert res.error < 1e-8


def test_liouville_odd_vanishes(round_metric):
    res = GD.liouville_mean_square(round_metric, G.harmonic_field({(1, 0): 1.0, (3, 0): 0.5}))
    assert abs(res.value) < 1e-10


def test_liouville_nonzonal_matches_funk_hecke(round_metric):
    # Σ P_l(0)² c_lm² / 4π
    table = {(2, 1): 0.6, (4, -3): 0.5, (3, 2): 0.4}
    res = GD.liouville_mean_square(round_metric, G.harmonic_field(table))
    exact = (0.25 * 0.36 + (3 / 8) ** 2 * 0.25) / (4 * math.pi)
    assert_allclose(res.value, exact, rtol=1e-6)


def test_liouville_rejects_unknown_symbol(zoll):
    with pytest.raises(InvalidArgument):
        GD.liouville_mean_square(zoll, "tau")


def test_batch_backends_agree(zoll, rng):
    starts = [GD.lift_to_cosphere(zoll, (th, 0.0), a) for th, a in rng.uniform([0.4, 0], [2.7, TWO_PI], (6, 2))]
    states = np.array([[s.u1, s.u2, s.p1, s.p2] for s in starts])
    axes = np.zeros(len(starts), dtype=np.int64)
    polys = GD.kernel_polys(zoll.profile)
    a = flow_nb.geodesic_batch(polys, states, axes, TWO_PI, 128, 8, True)
    b = flow_np.geodesic_batch(polys, states, axes, TWO_PI, 128, 8, True)
    for x, y in zip(a, b):
        assert_allclose(x, y, atol=1e-12)
