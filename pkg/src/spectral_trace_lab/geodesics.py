"""Geodesic flow on the unit cosphere bundle, closure certification, Jacobi
fields, the curvature symbol σ, flow averages and Liouville mean squares.

Phase points live in a polar chart about the ambient z-axis or x-axis.
Revolution metrics can always switch charts, so trajectories near a pole
are handed over to the other chart once |cos θ| exceeds cos 0.3. General
patches have a single chart and refuse to approach its poles.

Two integrators are provided. ``geodesic_flow`` uses the adaptive 8th-order
pair of :func:`numerics.ode_integrate` and works for any patch. The batch
kernel in :mod:`kernels` runs fixed-step RK4 for many revolution-metric
trajectories at once and powers the closure census and the Liouville means.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from . import kernels
from .errors import ClosureError, DegenerateMetricError, InvalidArgument, PoleProximityError
from .geometry import ScalarField, chart_coords, chart_frame, embed, gauss_curvature
from .numerics import gauss_legendre, ode_integrate

TWO_PI = 2.0 * np.pi
SWITCH_ANGLE = 0.3
POLE_MARGIN = 0.05
CLOSURE_TOL = 1e-6
CHUNKS_PER_PERIOD = 64
CURVATURE_STEP = 1e-5


@dataclass(frozen=True)
class PhasePoint:
    """Unit covector (p1, p2) at chart point (u1, u2) = (θ, φ)."""

    u1: float
    u2: float
    p1: float
    p2: float
    chart: str = "z"

    @property
    def state(self):
        return np.array([self.u1, self.u2, self.p1, self.p2])

    def hamiltonian(self, metric):
        A, B, C = _patch(metric, self.chart).coefficients(self.u1, self.u2)
        return 0.5 * (C * self.p1**2 - 2 * B * self.p1 * self.p2 + A * self.p2**2) / (A * C - B * B)


@dataclass
class GeodesicPath:
    """Samples of a trajectory at uniform arc length ``r``."""

    r: np.ndarray
    states: np.ndarray  # (n, 4) chart coordinates and momenta
    charts: np.ndarray  # (n,) chart labels
    positions: np.ndarray  # (n, 3) ambient points
    velocities: np.ndarray  # (n, 3) ambient unit tangents
    total_length: float
    closure_residual: Optional[float]
    hamiltonian_drift: float
    start: PhasePoint
    metric: object = field(repr=False)

    def phase_point(self, i):
        th, ph, p1, p2 = self.states[i]
        return PhasePoint(th, ph, p1, p2, str(self.charts[i]))


@dataclass
class JacobiData:
    """Fundamental solutions of y'' + K y = 0 along a path; J = v."""

    r: np.ndarray
    u_sol: np.ndarray
    du: np.ndarray
    v_sol: np.ndarray
    dv: np.ndarray
    curvature: np.ndarray
    wronskian_drift: float

    @property
    def J(self):
        return self.v_sol


@dataclass
class SigmaSamples:
    r: np.ndarray
    sigma: np.ndarray
    curvature: np.ndarray
    normal_derivative: np.ndarray
    bracket: np.ndarray


def _patch(metric, chart):
    if chart == metric.axis:
        return metric
    return metric.rotated()


def _can_rotate(metric):
    return metric.profile is not None


# ------------------------------------------------------------------ phase space


def lift_to_cosphere(metric, point, direction_angle, chart=None):
    """Unit covector at ``point`` whose velocity makes ``direction_angle`` with ∂/∂u₁.

    The angle is measured in a g-orthonormal frame whose first vector is ∂/∂u₁
    normalized, so angle 0 points along u₁ and angle π/2 is g-orthogonal to it.
    """
    chart = chart or metric.axis
    patch = _patch(metric, chart)
    u1, u2 = float(point[0]), float(point[1])
    A, B, C = (float(c) for c in patch.coefficients(u1, u2))
    D = A * C - B * B
    if A <= 0 or D <= 1e-14:
        raise DegenerateMetricError(f"metric degenerate at ({u1:.6g}, {u2:.6g})")
    e1 = np.array([1.0 / np.sqrt(A), 0.0])
    e2 = np.array([-B / np.sqrt(A * D), np.sqrt(A / D)])
    v = np.cos(direction_angle) * e1 + np.sin(direction_angle) * e2
    p = np.array([[A, B], [B, C]]) @ v
    return PhasePoint(u1, u2, float(p[0]), float(p[1]), chart)


def _velocity(patch, state):
    A, B, C = patch.coefficients(state[0], state[1])
    D = A * C - B * B
    return (C * state[2] - B * state[3]) / D, (-B * state[2] + A * state[3]) / D


def _to_ambient(patch, state):
    v1, v2 = _velocity(patch, state)
    e_t, e_p = chart_frame(patch.axis, state[0], state[1])
    return embed(patch.axis, state[0], state[1]), v1 * e_t + v2 * e_p


def _from_ambient(patch, omega, vel):
    th, ph = chart_coords(patch.axis, omega)
    e_t, e_p = chart_frame(patch.axis, th, ph)
    v1 = np.dot(vel, e_t)
    v2 = np.dot(vel, e_p) / np.sin(th) ** 2
    A, B, C = patch.coefficients(th, ph)
    return np.array([th, ph, A * v1 + B * v2, B * v1 + C * v2])


def _switch(metric, chart, y):
    """Re-express the phase part of ``y`` in the other chart."""
    patch = _patch(metric, chart)
    omega, vel = _to_ambient(patch, y[:4])
    new = "x" if chart == "z" else "z"
    y = y.copy()
    y[:4] = _from_ambient(_patch(metric, new), omega, vel)
    return new, y


def _hamilton_field(patch, jacobi):
    def field_fn(y):
        j = patch.jet(y[0], y[1], order=1)
        A, B, C = j.g
        D = A * C - B * B
        v1 = (C * y[2] - B * y[3]) / D
        v2 = (-B * y[2] + A * y[3]) / D
        quad = lambda k: 0.5 * (j.dg[0, k] * v1 * v1 + 2 * j.dg[1, k] * v1 * v2 + j.dg[2, k] * v2 * v2)  # noqa: E731
        out = np.empty_like(y)
        out[0], out[1], out[2], out[3] = v1, v2, quad(0), quad(1)
        if jacobi:
            K = float(gauss_curvature(patch, y[0], y[1]))
            out[4], out[5] = y[5], -K * y[4]
            out[6], out[7] = y[7], -K * y[6]
        return out

    return field_fn


def _near_pole(y):
    return abs(np.cos(y[0])) > np.cos(SWITCH_ANGLE)


def _integrate(metric, start, length, samples_per_period, tol, jacobi):
    """Chunked integration with chart switching; returns sample arrays."""
    if length <= 0:
        raise InvalidArgument(f"length must be positive, got {length}")
    n_chunks = max(1, int(np.ceil(CHUNKS_PER_PERIOD * length / TWO_PI - 1e-9)))
    chunk = TWO_PI / CHUNKS_PER_PERIOD
    n_samples = max(1, int(round(samples_per_period * length / TWO_PI)))
    r_samples = np.linspace(0.0, length, n_samples + 1)

    y = start.state
    if jacobi:
        y = np.concatenate([y, [1.0, 0.0, 0.0, 1.0]])
    chart = start.chart
    out = np.empty((n_samples + 1, y.size))
    charts = np.empty(n_samples + 1, dtype="<U1")
    at_two_pi = None
    r0 = 0.0
    for c in range(n_chunks):
        patch = _patch(metric, chart)
        if not _can_rotate(metric):
            if min(y[0], np.pi - y[0]) < POLE_MARGIN:
                raise PoleProximityError(
                    f"geodesic reached θ={y[0]:.4g} (within {POLE_MARGIN} of a pole) and the metric has no rotated chart"
                )
        r1 = min(length, r0 + chunk)
        sel = np.nonzero((r_samples >= r0 - 1e-14) & (r_samples <= r1 + 1e-14))[0]
        if c > 0:
            sel = sel[r_samples[sel] > r0 + 1e-14]
        # coarse sampling can leave a chunk without output samples
        res = ode_integrate(_hamilton_field(patch, jacobi), y, r1 - r0, tol=tol,
                            samples=r_samples[sel] - r0 if sel.size else None)
        if sel.size:
            out[sel] = res.path
        charts[sel] = chart
        y = res.y
        r0 = r1
        if abs(r1 - TWO_PI) < 1e-12:
            at_two_pi = (chart, y.copy())
        if _can_rotate(metric) and _near_pole(y):
            chart, y = _switch(metric, chart, y)
    return r_samples, out, charts, at_two_pi


def geodesic_flow(metric, start, length=TWO_PI, samples_per_period=256, tol=1e-11):
    """Integrate Hamilton's equations for H = ½ g^{ij} p_i p_j from ``start``.

    Samples are returned at uniform arc length. When ``length`` reaches 2π
    the closure residual |Δω| + |Δγ'| (ambient coordinates) is recorded.
    """
    if abs(start.hamiltonian(metric) - 0.5) > 1e-10:
        raise InvalidArgument("start is not on the unit cosphere (H != 1/2)")
    r, states, charts, at_two_pi = _integrate(metric, start, length, samples_per_period, tol, False)
    pos = np.empty((r.size, 3))
    vel = np.empty((r.size, 3))
    H = np.empty(r.size)
    for chart in np.unique(charts):
        idx = np.nonzero(charts == chart)[0]
        patch = _patch(metric, chart)
        S = states[idx].T
        v1, v2 = _velocity(patch, S)
        e_t, e_p = chart_frame(patch.axis, S[0], S[1])
        pos[idx] = embed(patch.axis, S[0], S[1]).T
        vel[idx] = (v1 * e_t + v2 * e_p).T
        H[idx] = 0.5 * (v1 * S[2] + v2 * S[3])
    closure = None
    if at_two_pi is not None:
        om0, v0 = _to_ambient(_patch(metric, start.chart), start.state)
        om1, v1_ = _to_ambient(_patch(metric, at_two_pi[0]), at_two_pi[1][:4])
        closure = float(np.linalg.norm(om1 - om0) + np.linalg.norm(v1_ - v0))
    return GeodesicPath(
        r=r,
        states=states,
        charts=charts,
        positions=pos,
        velocities=vel,
        total_length=float(length),
        closure_residual=closure,
        hamiltonian_drift=float(np.max(np.abs(H - 0.5))),
        start=start,
        metric=metric,
    )


def jacobi_solve(metric, path, tol=1e-11):
    """Fundamental Jacobi solutions u (u(0)=1, u'(0)=0) and v (v(0)=0, v'(0)=1).

    The geodesic is re-integrated together with the Jacobi system so the
    curvature is evaluated on the exact trajectory, at the path's sample grid.
    """
    n = path.r.size - 1
    per_period = n * TWO_PI / path.total_length
    r, states, charts, _ = _integrate(metric, path.start, path.total_length, per_period, tol, True)
    K = np.empty(r.size)
    for chart in np.unique(charts):
        idx = np.nonzero(charts == chart)[0]
        K[idx] = gauss_curvature(_patch(metric, chart), states[idx, 0], states[idx, 1])
    u, du, v, dv = states[:, 4], states[:, 5], states[:, 6], states[:, 7]
    drift = float(np.max(np.abs(u * dv - du * v - 1.0)))
    return JacobiData(r=r, u_sol=u, du=du, v_sol=v, dv=dv, curvature=K, wronskian_drift=drift)


def _normal_derivative(patch, states, step):
    """(K)_ν with ν the unit normal (-p₂, p₁)/√det g, gradient by central differences."""
    th, ph, p1, p2 = states.T
    K_t = (gauss_curvature(patch, th + step, ph) - gauss_curvature(patch, th - step, ph)) / (2 * step)
    K_p = (gauss_curvature(patch, th, ph + step) - gauss_curvature(patch, th, ph - step)) / (2 * step)
    sq = patch.sqrt_det(th, ph)
    return (-p2 * K_t + p1 * K_p) / sq


def normal_curvature_derivative(metric, path, r, step=CURVATURE_STEP):
    """Derivative of K along the unit normal ω × γ' to the geodesic at arc length ``r``."""
    if not 0 <= r <= path.total_length:
        raise InvalidArgument(f"r={r} outside the path [0, {path.total_length}]")
    if r == 0:
        pp = path.start
    else:
        pp = geodesic_flow(metric, path.start, r, samples_per_period=8).phase_point(-1)
    patch = _patch(metric, pp.chart)
    patch.check_point(pp.u1)
    return float(_normal_derivative(patch, pp.state[None, :], step)[0])


def _normal_derivative_samples(metric, states, charts, step=CURVATURE_STEP):
    out = np.empty(states.shape[0])
    for chart in np.unique(charts):
        idx = np.nonzero(charts == chart)[0]
        out[idx] = _normal_derivative(_patch(metric, chart), states[idx, :4], step)
    return out


def sigma_bracket(kv, u, v, r):
    """⅓ K_ν u³ ∫₀^r K_ν v³ - K_ν u² v ∫₀^r K_ν u v², nested integrals by cumulative trapezoid."""
    i3 = cumulative_trapezoid(kv * v**3, r, initial=0.0)
    i1 = cumulative_trapezoid(kv * u * v**2, r, initial=0.0)
    return kv * u**3 * i3 / 3.0 - kv * u**2 * v * i1


def zelditch_sigma(metric, start, n_samples=2048, certify=True):
    """σ(r) = ¼(K - 1 + bracket(r)) along the closed geodesic through ``start``."""
    path = geodesic_flow(metric, start, TWO_PI, samples_per_period=n_samples)
    if certify and not path.closure_residual < CLOSURE_TOL:
        raise ClosureError(
            f"geodesic does not close at length 2π (residual {path.closure_residual:.3g}); σ needs a closed orbit"
        )
    jac = jacobi_solve(metric, path)
    kv = _normal_derivative_samples(metric, path.states, path.charts)
    br = sigma_bracket(kv, jac.u_sol, jac.v_sol, path.r)
    sigma = 0.25 * (jac.curvature - 1.0 + br)
    return SigmaSamples(r=path.r, sigma=sigma, curvature=jac.curvature, normal_derivative=kv, bracket=br)


def flow_average(metric, f, start, n_samples=512):
    """(1/2π) ∫₀^{2π} f(flow_t(start)) dt.

    ``f`` is a :class:`ScalarField` on the surface, a callable taking a
    :class:`GeodesicPath` and returning values at ``path.r``, or ``"sigma"``.
    """
    if isinstance(f, str) and f == "sigma":
        s = zelditch_sigma(metric, start, n_samples=n_samples)
        return float(trapezoid(s.sigma, s.r) / TWO_PI)
    path = geodesic_flow(metric, start, TWO_PI, samples_per_period=n_samples)
    if isinstance(f, ScalarField):
        vals = f.at_points(path.positions.T)
    else:
        vals = np.asarray(f(path), dtype=float)
    return float(trapezoid(vals, path.r) / TWO_PI)


# ------------------------------------------------------------ batch kernel


def kernel_polys(profile):
    """Coefficient rows (w, w', a, a', a'') padded to a common length for the batch kernel."""
    rows = [profile.w, profile.dw, profile.a, profile.da, profile.d2a]
    n = max(len(p.coef) for p in rows)
    out = np.zeros((5, n))
    for i, p in enumerate(rows):
        out[i, : len(p.coef)] = p.coef
    return out


@dataclass
class BatchFlow:
    positions: np.ndarray  # (n, n_out + 1, 3)
    velocities: np.ndarray
    jacobi: np.ndarray  # (n, n_out + 1, 6): K, K_ν, u, v, ∫K_ν v³, ∫K_ν u v²
    hamiltonian_drift: np.ndarray
    r: np.ndarray

    @property
    def closure_residuals(self):
        dpos = np.linalg.norm(self.positions[:, -1] - self.positions[:, 0], axis=1)
        dvel = np.linalg.norm(self.velocities[:, -1] - self.velocities[:, 0], axis=1)
        return dpos + dvel

    def sigma(self):
        K, kv, u, v, i3, i1 = np.moveaxis(self.jacobi, -1, 0)
        return 0.25 * (K - 1.0 + kv * u**3 * i3 / 3.0 - kv * u**2 * v * i1)


def batch_flow(metric, starts, length=TWO_PI, n_out=256, n_sub=16, jacobi=False):
    """Integrate many phase points of a revolution metric with the RK4 kernel."""
    if metric.profile is None:
        raise InvalidArgument("batch flow needs a metric of revolution")
    states = np.array([[s.u1, s.u2, s.p1, s.p2] for s in starts], dtype=float)
    axes = np.array([0 if s.chart == "z" else 1 for s in starts], dtype=np.int64)
    # chart labels refer to ambient axes; the kernel's chart 0 is the z-axis
    if metric.axis == "x":
        axes = 1 - axes
    pos, vel, jac, hdrift, _, _ = kernels.geodesic_batch(
        kernel_polys(metric.profile), states, axes, float(length), int(n_out), int(n_sub), bool(jacobi)
    )
    return BatchFlow(pos, vel, jac, hdrift, np.linspace(0.0, length, n_out + 1))


def _start_in_good_chart(metric, omega, angle):
    """Lift at ambient ``omega`` in whichever chart keeps the point away from its poles."""
    chart = "z" if abs(omega[2]) <= np.cos(SWITCH_ANGLE) else "x"
    th, ph = chart_coords(chart, omega)
    return lift_to_cosphere(metric, (th, ph), angle, chart=chart)


@dataclass
class ClosureCensus:
    residuals: np.ndarray
    hamiltonian_drift: np.ndarray
    starts: list

    @property
    def max_residual(self):
        return float(np.max(self.residuals))

    def certified(self, tol=CLOSURE_TOL):
        return bool(self.max_residual < tol)


def closure_census(metric, n=100, seed=0, n_steps=4096):
    """Closure residuals at length 2π for ``n`` random unit covectors."""
    rng = np.random.default_rng(seed)
    omega = rng.normal(size=(n, 3))
    omega /= np.linalg.norm(omega, axis=1, keepdims=True)
    angles = rng.uniform(0.0, TWO_PI, size=n)
    starts = [_start_in_good_chart(metric, om, a) for om, a in zip(omega, angles)]
    n_out = 64
    flow = batch_flow(metric, starts, TWO_PI, n_out=n_out, n_sub=max(1, n_steps // n_out))
    return ClosureCensus(flow.closure_residuals, flow.hamiltonian_drift, starts)


# --------------------------------------------------------- Liouville means


@dataclass
class LiouvilleMean:
    value: float
    error: float
    mean: float
    resolution: tuple


def _liouville_nodes(metric, n_fiber, n_x):
    rule = gauss_legendre(n_x)
    theta = np.arccos(rule.nodes)
    alphas = TWO_PI * (np.arange(n_fiber) + 0.5) / n_fiber
    starts, weights = [], []
    for th, wx in zip(theta, rule.weights):
        # dS = √det g dθ dφ = (√det g / sin θ) dx dφ
        dens = float(metric.sqrt_det(th, 0.0)) / np.sin(th)
        for a in alphas:
            starts.append(lift_to_cosphere(metric, (th, 0.0), a))
            weights.append(wx * dens)
    return starts, np.asarray(weights)


def _rotate_z(points, angle):
    c, s = np.cos(angle), np.sin(angle)
    x, y, z = points
    return np.stack([c * x - s * y, s * x + c * y, z])


def _mean_square_once(metric, f, n_fiber, n_x, n_phi, n_out, n_sub):
    starts, weights = _liouville_nodes(metric, n_fiber, n_x)
    is_sigma = isinstance(f, str)
    flow = batch_flow(metric, starts, TWO_PI, n_out=n_out, n_sub=n_sub, jacobi=is_sigma)
    r = flow.r
    if is_sigma:
        worst = float(np.max(flow.closure_residuals))
        if not worst < CLOSURE_TOL:
            raise ClosureError(f"σ needs closed geodesics; worst closure residual {worst:.3g}")
        avg = trapezoid(flow.sigma(), r, axis=1) / TWO_PI
        return float(np.sum(weights * avg**2) / np.sum(weights)), float(np.sum(weights * avg) / np.sum(weights))
    pts = flow.positions.reshape(-1, 3).T
    if f.harmonics is not None and not f.zonal:
        return _harmonic_mean_square(f, pts, len(starts), r, weights, n_phi)
    if f.zonal:
        vals = f.at_points(pts).reshape(len(starts), -1)
        avg = trapezoid(vals, r, axis=1) / TWO_PI
        return float(np.sum(weights * avg**2) / np.sum(weights)), float(np.sum(weights * avg) / np.sum(weights))
    sq, mean = 0.0, 0.0
    for k in range(n_phi):
        vals = f.at_points(_rotate_z(pts, TWO_PI * k / n_phi)).reshape(len(starts), -1)
        avg = trapezoid(vals, r, axis=1) / TWO_PI
        sq += np.sum(weights * avg**2)
        mean += np.sum(weights * avg)
    norm = n_phi * np.sum(weights)
    return float(sq / norm), float(mean / norm)


def _rotated_coefficients(table, angle):
    """Coefficients of ω ↦ f(R ω) for R the rotation by ``angle`` about the z-axis."""
    out = {}
    for (l, m), c in table.items():
        if m == 0:
            out[(l, 0)] = out.get((l, 0), 0.0) + c
            continue
        am = abs(m)
        cs, sn = np.cos(am * angle), np.sin(am * angle)
        if m > 0:  # cos(m(φ + a)) = cos ma·cos mφ - sin ma·sin mφ
            pairs = (((l, am), c * cs), ((l, -am), -c * sn))
        else:  # sin(m(φ + a)) = cos ma·sin mφ + sin ma·cos mφ
            pairs = (((l, -am), c * cs), ((l, am), c * sn))
        for key, val in pairs:
            out[key] = out.get(key, 0.0) + val
    return out


def _harmonic_mean_square(f, pts, n_paths, r, weights, n_phi):
    """Rotations act on harmonic coefficients, so each Y_lm is averaged along the paths once."""
    from .numerics import harmonic_index, sph_harm_table

    lmax = max(l for l, _ in f.harmonics)
    theta, phi = chart_coords("z", pts)
    keys = sorted({(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)})
    Y = sph_harm_table(lmax, theta, phi)[[harmonic_index(l, m) for l, m in keys]]
    avg_Y = trapezoid(Y.reshape(len(keys), n_paths, -1), r, axis=2) / TWO_PI
    sq, mean = 0.0, 0.0
    for k in range(n_phi):
        rot = _rotated_coefficients(f.harmonics, TWO_PI * k / n_phi)
        coef = np.array([rot.get(key, 0.0) for key in keys])
        avg = coef @ avg_Y
        sq += np.sum(weights * avg**2)
        mean += np.sum(weights * avg)
    norm = n_phi * np.sum(weights)
    return float(sq / norm), float(mean / norm)


def liouville_mean_square(metric, f, n_fiber=24, n_x=32, n_phi=48, n_out=None, n_sub=None):
    """Normalized Liouville mean of (f^av)² over the unit cosphere bundle.

    ``f`` is a :class:`ScalarField` or ``"sigma"``. Nodes are Gauss–Legendre
    in cos θ, uniform in φ and in the fiber angle; the metric's rotation
    symmetry lets every φ-node reuse the φ = 0 trajectories rotated about
    the axis. ``error`` is the change from a half-resolution evaluation.
    """
    if metric.profile is None or metric.axis != "z":
        raise InvalidArgument("Liouville means are implemented for metrics of revolution")
    is_sigma = isinstance(f, str)
    if is_sigma and f != "sigma":
        raise InvalidArgument(f"unknown phase-space function {f!r}")
    if n_out is None:
        n_out = 2048 if is_sigma else 256
    if n_sub is None:
        n_sub = 2 if is_sigma else 16
    value, mean = _mean_square_once(metric, f, n_fiber, n_x, n_phi, n_out, n_sub)
    coarse, _ = _mean_square_once(
        metric, f, max(2, n_fiber // 2), max(2, n_x // 2), max(2, n_phi // 2), n_out, n_sub
    )
    return LiouvilleMean(value=value, error=abs(value - coarse), mean=mean, resolution=(n_fiber, n_x, n_phi))
