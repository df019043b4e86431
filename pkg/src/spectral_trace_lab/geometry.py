"""Metric patches on the two-sphere, Gaussian curvature, the Laplace–Beltrami
operator, surface integrals and the zeta / heat-coefficient invariants.

All builtin metrics have the form

    ds² = (1 + h(cos θ))² dθ² + sin²θ dφ²

which on the unit sphere is the round metric plus w(z) dz² with
w = h(2 + h) / (1 - z²). Writing the perturbation through the ambient height
z lets the same metric be expressed in a second polar chart whose axis is the
ambient x-axis; geodesics switch to that chart near the poles.
"""

from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DegenerateMetricError, InvalidArgument, PoleProximityError, QuadratureFailure
from .numerics import assoc_legendre, assoc_legendre_flux, gauss_legendre, harmonic_index, sph_harm_table

FOUR_PI = 4.0 * np.pi

# g: (3, ...) = A, B, C; dg: (3, 2, ...) first partials; d2g: (3, 3, ...) with
# second index 0 -> (1,1), 1 -> (1,2), 2 -> (2,2).
MetricJet = namedtuple("MetricJet", "g dg d2g")


# ------------------------------------------------------------------ profiles


class RevolutionProfile:
    """Profile h of the metric (1 + h(z))² dθ² + sin²θ dφ², z = cos θ.

    ``h`` is a polynomial in z vanishing at z = ±1.
    """

    def __init__(self, coefficients):
        self.h = Polynomial(np.asarray(coefficients, dtype=float))
        if abs(self.h(1.0)) > 1e-14 or abs(self.h(-1.0)) > 1e-14:
            raise DegenerateMetricError("profile h must vanish at z = ±1 for a smooth metric")
        numer = self.h * (2.0 + self.h)
        self.w, rem = divmod(numer, Polynomial([1.0, 0.0, -1.0]))
        if np.max(np.abs(rem.coef)) > 1e-12:
            raise DegenerateMetricError("h(2 + h) is not divisible by 1 - z²")
        self.dw, self.d2w = self.w.deriv(1), self.w.deriv(2)
        self.a = 1.0 + self.h
        self.da, self.d2a = self.a.deriv(1), self.a.deriv(2)
        zs = np.linspace(-1.0, 1.0, 4001)
        self.sup_abs_h = float(np.max(np.abs(self.h(zs))))
        if self.sup_abs_h >= 1.0:
            raise DegenerateMetricError(f"sup|h| = {self.sup_abs_h:.3g} >= 1 degenerates the metric")

    @property
    def is_flat(self):
        return bool(np.all(self.h.coef == 0))

    @property
    def is_odd(self):
        c = np.trim_zeros(self.h.coef, "b")
        return bool(np.all(np.abs(c[0::2]) < 1e-15)) if c.size else True

    def curvature(self, z):
        """K(z) = (a - z a') / a³ with a = 1 + h."""
        a, da = self.a(z), self.da(z)
        return (a - z * da) / a**3

    def curvature_dz(self, z):
        a, da, d2a = self.a(z), self.da(z), self.d2a(z)
        return -(z * d2a * a + 3.0 * (a - z * da) * da) / a**4

    def curvature_d2z(self, z):
        a, da, d2a = self.a(z), self.da(z), self.d2a(z)
        d3a = self.a.deriv(3)(z)
        n, dn, d2n = a - z * da, -z * d2a, -d2a - z * d3a
        return d2n / a**3 - 3.0 * (2.0 * dn * da + n * d2a) / a**4 + 12.0 * n * da**2 / a**5


# -------------------------------------------------------------------- charts


def embed(axis, theta, phi):
    """Point of the unit sphere for polar coordinates about ``axis``."""
    s, c = np.sin(theta), np.cos(theta)
    if axis == "z":
        return np.stack([s * np.cos(phi), s * np.sin(phi), c])
    return np.stack([c, s * np.cos(phi), s * np.sin(phi)])


def chart_coords(axis, omega):
    x, y, z = omega
    if axis == "z":
        return np.arccos(np.clip(z, -1.0, 1.0)), np.mod(np.arctan2(y, x), 2 * np.pi)
    return np.arccos(np.clip(x, -1.0, 1.0)), np.mod(np.arctan2(z, y), 2 * np.pi)


def chart_frame(axis, theta, phi):
    """Ambient coordinate vectors ∂ω/∂θ and ∂ω/∂φ."""
    s, c = np.sin(theta), np.cos(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    zero = np.zeros_like(s * cp)
    if axis == "z":
        return np.stack([c * cp, c * sp, -s + zero]), np.stack([-s * sp, s * cp, zero])
    return np.stack([-s + zero, c * cp, c * sp]), np.stack([zero, -s * sp, s * cp])


def _height_jets(axis, theta, phi):
    """Ambient height z and its chart partials up to third order."""
    s, c = np.sin(theta), np.cos(theta)
    zero = np.zeros_like(s * np.cos(phi))
    d1 = np.empty((2,) + zero.shape)
    d2 = np.empty((2, 2) + zero.shape)
    d3 = np.empty((2, 2, 2) + zero.shape)
    if axis == "z":
        z = c + zero
        d1[0], d1[1] = -s, 0.0
        d2[:] = 0.0
        d2[0, 0] = -c
        d3[:] = 0.0
        d3[0, 0, 0] = s
        return z, d1, d2, d3
    sp, cp = np.sin(phi), np.cos(phi)
    z = s * sp
    d1[0], d1[1] = c * sp, s * cp
    d2[0, 0], d2[1, 1] = -s * sp, -s * sp
    d2[0, 1] = d2[1, 0] = c * cp
    # third partials: each θ or φ derivative of sinθ sinφ cycles the factors
    for i in range(2):
        for j in range(2):
            for k in range(2):
                n_theta = (i == 0) + (j == 0) + (k == 0)
                ft = [s, c, -s, -c][n_theta % 4]
                fp = [sp, cp, -sp, -cp][(3 - n_theta) % 4]
                d3[i, j, k] = ft * fp
    return z, d1, d2, d3


def _revolution_jet(profile, axis, theta, phi, order=2):
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    s, c = np.sin(theta), np.cos(theta)
    z, z1, z2, z3 = _height_jets(axis, theta, phi)
    w = profile.w(z)
    w1 = profile.dw(z)
    w2 = profile.d2w(z)
    shape = theta.shape
    g = np.zeros((3,) + shape)
    dg = np.zeros((3, 2) + shape)
    d2g = np.zeros((3, 3) + shape)
    # round part (1, 0, sin²θ)
    g[0] = 1.0
    g[2] = s * s
    dg[2, 0] = 2.0 * s * c
    d2g[2, 0] = 2.0 * (c * c - s * s)
    pairs = ((0, 0), (0, 1), (1, 1))
    second = ((0, 0), (0, 1), (1, 1))
    for n, (a, b) in enumerate(pairs):
        za, zb = z1[a], z1[b]
        g[n] += w * za * zb
        if order < 1:
            continue
        for i in range(2):
            dg[n, i] += w1 * z1[i] * za * zb + w * (z2[a, i] * zb + za * z2[b, i])
        if order < 2:
            continue
        for q, (i, j) in enumerate(second):
            d2g[n, q] += (
                w2 * z1[i] * z1[j] * za * zb
                + w1 * (z2[i, j] * za * zb
                        + z1[i] * (z2[a, j] * zb + za * z2[b, j])
                        + z1[j] * (z2[a, i] * zb + za * z2[b, i]))
                + w * (z3[a, i, j] * zb + z2[a, i] * z2[b, j] + z2[a, j] * z2[b, i] + za * z3[b, i, j])
            )
    return MetricJet(g, dg, d2g)


def _fd_jet(coeff_fn, u1, u2, rel_step=1e-5):
    """Centered finite-difference jet for user metrics given by values only."""
    u1, u2 = np.broadcast_arrays(np.asarray(u1, float), np.asarray(u2, float))
    h1 = rel_step * np.maximum(1.0, np.abs(u1))
    h2 = rel_step * np.maximum(1.0, np.abs(u2))
    f = lambda a, b: np.asarray(coeff_fn(a, b), dtype=float)  # noqa: E731
    g0 = f(u1, u2)
    gp1, gm1 = f(u1 + h1, u2), f(u1 - h1, u2)
    gp2, gm2 = f(u1, u2 + h2), f(u1, u2 - h2)
    dg = np.stack([(gp1 - gm1) / (2 * h1), (gp2 - gm2) / (2 * h2)], axis=1)
    d11 = (gp1 - 2 * g0 + gm1) / h1**2
    d22 = (gp2 - 2 * g0 + gm2) / h2**2
    d12 = (f(u1 + h1, u2 + h2) - f(u1 + h1, u2 - h2) - f(u1 - h1, u2 + h2) + f(u1 - h1, u2 - h2)) / (
        4 * h1 * h2
    )
    return MetricJet(g0, dg, np.stack([d11, d12, d22], axis=1))


# -------------------------------------------------------------------- patches


@dataclass(frozen=True)
class MetricPatch:
    """A metric ds² = A du₁² + 2B du₁du₂ + C du₂² on a polar chart (u₁, u₂) = (θ, φ)."""

    name: str
    jet_fn: Callable
    axis: str = "z"
    derivative_mode: str = "analytic"
    pole_set: tuple = (0.0, np.pi)
    pole_radius: float = 1e-3
    domain: tuple = ((0.0, np.pi), (0.0, 2 * np.pi))
    profile: Optional[RevolutionProfile] = None
    params: dict = field(default_factory=dict)

    def jet(self, u1, u2, order=2):
        return self.jet_fn(u1, u2, order)

    def coefficients(self, u1, u2):
        return self.jet(u1, u2, order=0).g

    def sqrt_det(self, u1, u2):
        A, B, C = self.coefficients(u1, u2)
        return np.sqrt(A * C - B * B)

    @property
    def is_round(self):
        return self.profile is not None and self.profile.is_flat

    @property
    def axisymmetric(self):
        return self.profile is not None and self.axis == "z"

    def rotated(self):
        """The same metric in the polar chart about the other ambient axis."""
        if self.profile is None:
            raise InvalidArgument(f"metric {self.name!r} has no alternate chart")
        other = "x" if self.axis == "z" else "z"
        return _revolution_patch(self.name, self.profile, other, self.params)

    def validate(self, n=64):
        """Grid check of A > 0 and AC - B² > 0 on interior points."""
        (t0, t1), (p0, p1) = self.domain
        th = np.linspace(t0, t1, n + 2)[1:-1]
        ph = np.linspace(p0, p1, n, endpoint=False)
        T, P = np.meshgrid(th, ph, indexing="ij")
        A, B, C = self.coefficients(T, P)
        det = A * C - B * B
        if np.any(A <= 0) or np.any(det <= 0):
            raise DegenerateMetricError(f"metric {self.name!r} is not Riemannian on the sample grid")
        return float(det.min())

    def check_point(self, u1):
        u1 = np.asarray(u1, float)
        for pole in self.pole_set:
            if np.any(np.abs(u1 - pole) < self.pole_radius):
                raise PoleProximityError(f"point within {self.pole_radius} of the chart pole θ={pole:.4g}")


def _revolution_patch(name, profile, axis, params):
    return MetricPatch(
        name=name,
        jet_fn=lambda u1, u2, order=2: _revolution_jet(profile, axis, u1, u2, order),
        axis=axis,
        profile=profile,
        params=dict(params),
    )


def zoll_profile(eps):
    """h(z) = ε z (1 - z²)."""
    return RevolutionProfile([0.0, eps, 0.0, -eps])


def builtin_metric(family, **params):
    """Builtin metric patch in polar coordinates about the z-axis.

    ``family`` is one of ``round-sphere``, ``zoll-of-revolution`` (params:
    ``eps`` for h = ε z(1 - z²), or ``profile`` polynomial coefficients of an
    odd h) and ``revolution`` (any profile; used for non-Zoll controls).
    """
    if family == "round-sphere":
        profile = RevolutionProfile([0.0])
    elif family == "zoll-of-revolution":
        if "profile" in params:
            profile = RevolutionProfile(params["profile"])
            if not profile.is_odd:
                raise InvalidArgument("a Zoll profile must be odd in z")
        else:
            eps = float(params.get("eps", 0.1))
            profile = zoll_profile(eps)
    elif family == "revolution":
        profile = RevolutionProfile(params["profile"])
    else:
        raise InvalidArgument(f"unknown metric family {family!r}")
    patch = _revolution_patch(family, profile, "z", params)
    patch.validate()
    return patch


def control_metric(amplitude=0.1):
    """Non-Zoll control (1 + a sin²θ)² dθ² + sin²θ dφ²."""
    return builtin_metric("revolution", profile=[amplitude, 0.0, -amplitude])


def metric_from_functions(A, B, C, name="user"):
    """Patch from coefficient callables; partials by centered differences."""

    def coeffs(u1, u2):
        return np.stack(np.broadcast_arrays(A(u1, u2), B(u1, u2), C(u1, u2)))

    patch = MetricPatch(
        name=name,
        jet_fn=lambda u1, u2, order=2: _fd_jet(coeffs, u1, u2),
        derivative_mode="finite-difference",
    )
    patch.validate()
    return patch


def scaled_metric(metric, factor):
    """The metric multiplied by a constant factor (curvature scales by 1/factor)."""

    def jet(u1, u2, order=2):
        j = metric.jet(u1, u2, order)
        return MetricJet(factor * j.g, factor * j.dg, factor * j.d2g)

    return MetricPatch(name=f"{factor}*{metric.name}", jet_fn=jet, axis=metric.axis,
                       derivative_mode=metric.derivative_mode)


# ---------------------------------------------------------------- scalar fields


@dataclass(frozen=True)
class ScalarField:
    """Real function on the sphere in polar coordinates (θ, φ) about the z-axis."""

    fn: Callable
    zonal: bool = False
    band: Optional[int] = None
    name: str = "field"
    harmonics: Optional[dict] = None
    # optional analytic jet (f, f_θ, f_φ, f_θθ, f_θφ, f_φφ)
    jet: Optional[Callable] = None

    def __call__(self, theta, phi):
        theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
        return np.asarray(self.fn(theta, phi), dtype=float) + np.zeros(theta.shape)

    def at_points(self, omega):
        theta, phi = chart_coords("z", omega)
        return self(theta, phi)

    @property
    def is_zero(self):
        return self.harmonics is not None and all(v == 0 for v in self.harmonics.values())


def constant_field(c):
    c = float(c)

    def jet(theta, phi):
        zero = np.zeros(np.shape(theta))
        return zero + c, zero, zero, zero, zero, zero

    return ScalarField(lambda th, ph: np.full(np.shape(th), c), zonal=True, band=0,
                       name=f"const({c:g})", harmonics={(0, 0): c * np.sqrt(FOUR_PI)}, jet=jet)


def _harmonic_jet(table, theta, phi):
    """Exact θ/φ derivatives of Σ c_lm Y_lm; P_θθ from the associated Legendre equation."""
    shape = np.shape(theta)
    th, ph = np.ravel(theta), np.ravel(phi)
    x, s = np.cos(th), np.sin(th)
    out = [np.zeros(th.shape) for _ in range(6)]
    by_m = {}
    for (l, m), c in table.items():
        by_m.setdefault(abs(m), []).append((l, m, c))
    for am, items in by_m.items():
        lmax = max(l for l, _, _ in items)
        P = assoc_legendre(am, lmax, x)
        flux = assoc_legendre_flux(am, lmax, x, P)
        for l, m, c in items:
            p = P[l - am]
            p_t = -flux[l - am] / s
            p_tt = -(x / s) * p_t - (l * (l + 1) - am * am / (s * s)) * p
            if m > 0:
                a, a_p, a_pp = np.cos(m * ph), -m * np.sin(m * ph), -m * m * np.cos(m * ph)
                norm = 1.0 / np.sqrt(np.pi)
            elif m < 0:
                a, a_p, a_pp = np.sin(am * ph), am * np.cos(am * ph), -am * am * np.sin(am * ph)
                norm = 1.0 / np.sqrt(np.pi)
            else:
                a, a_p, a_pp = np.ones_like(ph), np.zeros_like(ph), np.zeros_like(ph)
                norm = 1.0 / np.sqrt(2 * np.pi)
            c = c * norm
            out[0] += c * p * a
            out[1] += c * p_t * a
            out[2] += c * p * a_p
            out[3] += c * p_tt * a
            out[4] += c * p_t * a_p
            out[5] += c * p * a_pp
    return tuple(o.reshape(shape) for o in out)


def harmonic_field(coefficients, name=None):
    """Σ c_lm Y_lm over a table ``{(l, m): c}`` of real orthonormal harmonics."""
    table = {(int(l), int(m)): float(c) for (l, m), c in coefficients.items()}
    for l, m in table:
        if l < 0 or abs(m) > l:
            raise InvalidArgument(f"invalid harmonic index (l={l}, m={m})")
    lmax = max((l for l, _ in table), default=0)
    idx = np.array([harmonic_index(l, m) for l, m in table], dtype=int)
    vals = np.array(list(table.values()))

    def fn(theta, phi):
        shape = np.shape(theta)
        Y = sph_harm_table(lmax, np.ravel(theta), np.ravel(phi))
        return (vals @ Y[idx]).reshape(shape)

    zonal = all(m == 0 for _, m in table)
    return ScalarField(fn, zonal=zonal, band=lmax, name=name or "harmonics", harmonics=table,
                       jet=lambda th, ph: _harmonic_jet(table, th, ph))


def cos_potential(alpha):
    """α·√(3/4π)·cos θ, i.e. α·Y_10 (∬q² dS = α²)."""
    return harmonic_field({(1, 0): alpha}, name=f"cos({alpha:g})")


def project_harmonics(fn, lmax, n=None):
    """Real-harmonic coefficients of ``fn(θ, φ)`` up to degree ``lmax`` by quadrature."""
    n = n or lmax + 8
    rule = gauss_legendre(n)
    nphi = 2 * lmax + 8
    phi = 2 * np.pi * np.arange(nphi) / nphi
    T, P = np.meshgrid(np.arccos(rule.nodes), phi, indexing="ij")
    W = np.outer(rule.weights, np.full(nphi, 2 * np.pi / nphi))
    Y = sph_harm_table(lmax, T.ravel(), P.ravel())
    coef = Y @ (np.asarray(fn(T, P), float) * W).ravel()
    return {(l, m): float(coef[harmonic_index(l, m)]) for l in range(lmax + 1) for m in range(-l, l + 1)}


# ------------------------------------------------------------------ curvature


def gauss_curvature(metric, u1, u2):
    """Gaussian curvature from A, B, C and their first and second partials."""
    j = metric.jet(u1, u2, order=2)
    A, B, C = j.g
    (A1, A2), (B1, B2), (C1, C2) = j.dg
    A11, A12, A22 = j.d2g[0]
    B11, B12, B22 = j.d2g[1]
    C11, C12, C22 = j.d2g[2]
    disc = B * B - A * C
    if np.any(np.abs(disc) < 1e-12):
        raise DegenerateMetricError("AC - B² below 1e-12 at curvature evaluation point")
    num = (
        C * A2**2
        - 2 * B * A2 * B2
        + A * A2 * C2
        + 2 * B**2 * A22
        - 2 * A * C * A22
        - 2 * C * B2 * A1
        + B * C2 * A1
        + 4 * B * B2 * B1
        - 2 * A * C2 * B1
        - B * A2 * C1
        + C * A1 * C1
        - 2 * B * B1 * C1
        + A * C1**2
        - 4 * B**2 * B12
        + 4 * A * C * B12
        + 2 * B**2 * C11
        - 2 * A * C * C11
    )
    return num / (4.0 * disc**2)


def curvature_field(metric):
    """K as a field; revolution metrics also get an analytic derivative jet."""
    jet = None
    if metric.profile is not None and metric.axis == "z":
        prof = metric.profile

        def jet(theta, phi):
            z, s = np.cos(theta), np.sin(theta)
            k1, k2 = prof.curvature_dz(z), prof.curvature_d2z(z)
            zero = np.zeros_like(z)
            return prof.curvature(z), -s * k1, zero, k2 * s * s - k1 * z, zero, zero

    return ScalarField(lambda th, ph: gauss_curvature(metric, th, ph), name="K", jet=jet)


# ------------------------------------------------------------ Laplace–Beltrami

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def field_derivatives(field, u1, u2, h=1e-3):
    """Fourth-order central differences: (f, f₁, f₂, f₁₁, f₁₂, f₂₂)."""
    u1, u2 = np.broadcast_arrays(np.asarray(u1, float), np.asarray(u2, float))
    offs = np.arange(-2, 3) * h
    col1 = [field(u1 + o, u2) for o in offs]
    col2 = [field(u1, u2 + o) for o in offs]
    f0 = col1[2]
    f1 = sum(c * v for c, v in zip(_D1, col1)) / h
    f2 = sum(c * v for c, v in zip(_D1, col2)) / h
    f11 = sum(c * v for c, v in zip(_D2, col1)) / h**2
    f22 = sum(c * v for c, v in zip(_D2, col2)) / h**2
    f12 = np.zeros_like(f0)
    for ci, oi in zip(_D1, offs):
        if ci == 0:
            continue
        for cj, oj in zip(_D1, offs):
            if cj:
                f12 = f12 + ci * cj * field(u1 + oi, u2 + oj)
    f12 = f12 / h**2
    return f0, f1, f2, f11, f12, f22


def laplace_beltrami(metric, field, u1, u2, h=1e-3):
    """(1/√det g) ∂_i(√det g g^{ij} ∂_j f) at chart points."""
    metric.check_point(u1)
    if getattr(field, "jet", None) is not None:
        u1, u2 = np.broadcast_arrays(np.asarray(u1, float), np.asarray(u2, float))
        _, f1, f2, f11, f12, f22 = field.jet(u1, u2)
    else:
        _, f1, f2, f11, f12, f22 = field_derivatives(field, u1, u2, h)
    j = metric.jet(u1, u2, order=1)
    A, B, C = j.g
    (A1, A2), (B1, B2), (C1, C2) = j.dg
    D = A * C - B * B
    if np.any(D <= 1e-12):
        raise DegenerateMetricError("degenerate metric in Laplace–Beltrami")
    D1 = A1 * C + A * C1 - 2 * B * B1
    D2 = A2 * C + A * C2 - 2 * B * B2
    sq = np.sqrt(D)
    # √D g^{ij} = M^{ij}/√D with M = [[C, -B], [-B, A]]
    div1 = (C1 - B2) / sq - (C * D1 - B * D2) / (2 * D * sq)  # Σ_i ∂_i(M^{i1}/√D)
    div2 = (-B1 + A2) / sq - (-B * D1 + A * D2) / (2 * D * sq)  # Σ_i ∂_i(M^{i2}/√D)
    hess = (C * f11 - 2 * B * f12 + A * f22) / D
    return hess + (div1 * f1 + div2 * f2) / sq


def laplacian_field(metric, field, h=1e-3):
    return ScalarField(lambda th, ph: laplace_beltrami(metric, field, th, ph, h), name=f"Δ{field.name}")


# ----------------------------------------------------------------- integration


def _surface_grid(metric, n):
    rule = gauss_legendre(n)
    nphi = 2 * n
    theta = np.arccos(rule.nodes)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    # dS = √det g dθ dφ = √det g / sinθ dx dφ
    W = np.outer(rule.weights / np.sin(theta), np.full(nphi, 2 * np.pi / nphi)) * metric.sqrt_det(T, P)
    return T, P, W


def integrate_scalar(metric, field, rtol=1e-8, atol=0.0, n_start=32, n_max=512, return_error=False):
    """∬ f dS with Gauss–Legendre in cos θ and the periodic rule in φ.

    The order is doubled until two successive estimates agree to ``rtol``
    relative to ∬|f| dS, or to ``atol``.
    """
    prev = None
    prev_err = np.inf
    n = n_start
    while n <= n_max:
        T, P, W = _surface_grid(metric, n)
        vals = np.asarray(field(T, P), float)
        est = float(np.sum(vals * W))
        scale = float(np.sum(np.abs(vals) * W))
        if prev is not None:
            err = abs(est - prev)
            if err <= max(rtol * scale, atol):
                return (est, err) if return_error else est
            if err > prev_err and n >= 4 * n_start:
                raise QuadratureFailure(f"order doubling is not converging (error {err:.3g} at n={n})")
            prev_err = err
        prev = est
        n *= 2
    raise QuadratureFailure(f"no convergence to rtol={rtol} by n={n_max} (last change {prev_err:.3g})")


# ------------------------------------------------------------------- invariants


@dataclass(frozen=True)
class ZetaValues:
    zeta0: float
    zeta1: float
    parts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HeatCoefficients:
    h0: float
    h1: float
    h2: float
    which: str

    def as_tuple(self):
        return (self.h0, self.h1, self.h2)


ROUND_F = HeatCoefficients(1.0, 1.0 / 3.0, 1.0 / 15.0, "F")

GAMMA_CHOICES = ("K", "K-1")

# ∬Δf dS vanishes identically; what remains is finite-difference noise near the poles
LAPLACIAN_ATOL = 1e-8


def curvature_integrals(metric, rtol=1e-9):
    """∬K dS, ∬K² dS and ∬ΔK dS."""
    K = curvature_field(metric)
    return {
        "int_K": integrate_scalar(metric, K, rtol),
        "int_K2": integrate_scalar(metric, lambda t, p: K(t, p) ** 2, rtol),
        "int_lapK": integrate_scalar(metric, laplacian_field(metric, K), rtol=1e-7, atol=LAPLACIAN_ATOL),
    }


def potential_integrals(metric, q, rtol=1e-9):
    """∬q, ∬q², ∬Δq and ∬qK over the surface."""
    K = curvature_field(metric)
    return {
        "int_q": integrate_scalar(metric, q, rtol),
        "int_q2": integrate_scalar(metric, lambda t, p: q(t, p) ** 2, rtol),
        "int_lapq": integrate_scalar(metric, laplacian_field(metric, q), rtol=1e-7, atol=LAPLACIAN_ATOL),
        "int_qK": integrate_scalar(metric, lambda t, p: q(t, p) * K(t, p), rtol),
    }


def zeta_values(metric, q=None, gamma="K", curv=None, pot=None):
    """ζ(0) and ζ(1) of -Δ + q from curvature and potential integrals.

    ``gamma`` selects the function multiplying -2q in ζ(1): ``"K"`` (default,
    matches the heat coefficients of e^{-ct}F(t) for constant q) or ``"K-1"``.
    """
    if gamma not in GAMMA_CHOICES:
        raise InvalidArgument(f"gamma must be one of {GAMMA_CHOICES}")
    curv = curv or curvature_integrals(metric)
    if q is None or (isinstance(q, ScalarField) and q.is_zero):
        pot = {"int_q": 0.0, "int_q2": 0.0, "int_lapq": 0.0, "int_qK": 0.0}
    else:
        pot = pot or potential_integrals(metric, q)
    int_q_gamma = pot["int_qK"] - (pot["int_q"] if gamma == "K-1" else 0.0)
    zeta0 = (curv["int_K"] / 3.0 - pot["int_q"]) / FOUR_PI
    curv_term = curv["int_lapK"] + curv["int_K2"]
    pot_term = -pot["int_lapq"] + 3.0 * pot["int_q2"] - 2.0 * int_q_gamma
    zeta1 = -curv_term / (60.0 * np.pi) - pot_term / (24.0 * np.pi)
    parts = dict(curv)
    parts.update(pot)
    parts.update(curvature_term=curv_term, potential_term=pot_term, gamma=gamma)
    return ZetaValues(zeta0=float(zeta0), zeta1=float(zeta1), parts=parts)


def heat_coefficients_from_zeta(metric, q=None, which="L", gamma="K", zeta=None):
    """(h0, h1, h2) = (1, ζ(0), -ζ(1)) for L (q ignored) or M; F is the round constant."""
    if which == "F":
        return ROUND_F
    if which not in ("L", "M"):
        raise InvalidArgument(f"which must be F, L or M, got {which!r}")
    z = zeta or zeta_values(metric, None if which == "L" else q, gamma=gamma)
    return HeatCoefficients(1.0, z.zeta0, -z.zeta1, which)
