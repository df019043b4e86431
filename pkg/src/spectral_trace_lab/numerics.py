"""Shared numerical kernels: quadrature, ODE integration, Legendre functions,
real spherical harmonics and small asymptotic model fits."""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.integrate import solve_ivp

from . import kernels
from .errors import FitDegenerateError, InvalidArgument, StiffnessError


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise InvalidArgument("node and weight counts differ")

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.nodes)))


def gauss_legendre(n, a=-1.0, b=1.0):
    """Gauss–Legendre rule with ``n`` nodes on ``[a, b]``."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"gauss_legendre needs n >= 1, got {n}")
    if not a < b:
        raise InvalidArgument(f"gauss_legendre needs a < b, got ({a}, {b})")
    x, w = npleg.leggauss(int(n))
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=half * x + 0.5 * (a + b), weights=half * w, interval=(a, b))


@dataclass
class OdeResult:
    y: np.ndarray
    t: np.ndarray = None
    path: np.ndarray = None
    nfev: int = 0


def ode_integrate(field, y0, length, tol=1e-10, samples=None):
    """Integrate the autonomous system ``y' = field(y)`` over ``[0, length]``.

    Uses an embedded 8(5,3) Runge–Kutta pair with local error control at
    ``tol`` (relative and absolute). ``samples`` is an optional array of
    times in ``[0, length]`` at which the dense interpolant is evaluated.
    A negative ``length`` integrates backwards.
    """
    if not 1e-14 <= tol <= 1e-4:
        raise InvalidArgument(f"tol must lie in [1e-14, 1e-4], got {tol}")
    y0 = np.asarray(y0, dtype=float)
    if length == 0:
        path = None if samples is None else np.repeat(y0[None, :], len(samples), axis=0)
        return OdeResult(y=y0.copy(), t=None if samples is None else np.asarray(samples), path=path)

    sol = solve_ivp(
        lambda _t, y: field(y),
        (0.0, float(length)),
        y0,
        method="DOP853",
        rtol=tol,
        atol=tol,
        dense_output=samples is not None,
    )
    if sol.status != 0:
        state = sol.y[:, -1] if sol.y.size else y0
        raise StiffnessError(
            f"integration stopped at t={sol.t[-1]:.6g} of {length:.6g} ({sol.message}); "
            f"state reached: {np.array2string(state, precision=6)}",
            state=state,
        )
    h_min = np.min(np.abs(np.diff(sol.t))) if sol.t.size > 1 else abs(length)
    if h_min < 1e-12 * abs(length) and sol.t.size > 2:
        raise StiffnessError(
            f"step size {h_min:.3g} underflowed at state {np.array2string(sol.y[:, -1], precision=6)}",
            state=sol.y[:, -1],
        )
    out = OdeResult(y=sol.y[:, -1].copy(), nfev=sol.nfev)
    if samples is not None:
        ts = np.asarray(samples, dtype=float)
        out.t = ts
        out.path = sol.sol(ts).T
    return out


def legendre_P(l, x):
    """Legendre polynomial P_l(x) by the three-term recursion."""
    if l < 0 or int(l) != l:
        raise InvalidArgument(f"degree must be a nonnegative integer, got {l}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise InvalidArgument("legendre_P requires |x| <= 1")
    p_prev, p = np.ones_like(x), x.copy()
    if l == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    for n in range(1, int(l)):
        p_prev, p = p, ((2 * n + 1) * x * p - n * p_prev) / (n + 1)
    return p if p.ndim else float(p)


def legendre_P_at_zero(l):
    """P_l(0): zero for odd l, (-1)^(l/2) (l-1)!!/l!! for even l."""
    if l % 2:
        return 0.0
    val = 1.0
    for k in range(1, l // 2 + 1):
        val *= -(2 * k - 1) / (2 * k)
    return val


def assoc_legendre(m, lmax, x):
    """Orthonormal associated Legendre table, rows l = m..lmax.

    Normalised so that ∫_{-1}^{1} P̄_l^m P̄_l'^m dx = δ_ll'; no Condon–Shortley phase.
    """
    if m < 0 or lmax < m:
        raise InvalidArgument(f"need 0 <= m <= lmax, got m={m}, lmax={lmax}")
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)))
    return kernels.plm_table(int(m), int(lmax), x)


def assoc_legendre_flux(m, lmax, x, table=None):
    """(1 - x²) d/dx of the orthonormal associated Legendre table."""
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)))
    if table is None:
        table = assoc_legendre(m, lmax, x)
    return kernels.plm_flux_table(int(m), int(lmax), x, np.ascontiguousarray(table))


def _azimuthal(m, phi):
    if m > 0:
        return np.cos(m * phi) / np.sqrt(np.pi)
    if m < 0:
        return np.sin(-m * phi) / np.sqrt(np.pi)
    return np.full_like(phi, 1.0 / np.sqrt(2.0 * np.pi))


def spherical_harmonic(l, m, theta, phi):
    """Real orthonormal spherical harmonic Y_lm(θ, φ).

    m > 0 carries cos(mφ), m < 0 carries sin(|m|φ).
    """
    if abs(m) > l:
        raise InvalidArgument(f"|m| must not exceed l, got l={l}, m={m}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any((theta < 0) | (theta > np.pi)):
        raise InvalidArgument("theta must lie in [0, pi]")
    theta_b, phi_b = np.broadcast_arrays(theta, phi)
    x = np.cos(theta_b).ravel()
    p = assoc_legendre(abs(m), l, x)[-1].reshape(theta_b.shape)
    val = p * _azimuthal(m, phi_b)
    return val if val.ndim else float(val)


def harmonic_index(l, m):
    return l * l + l + m


def sph_harm_table(lmax, theta, phi):
    """All real harmonics up to ``lmax`` at the points, shape ((lmax+1)², npts)."""
    theta = np.ravel(np.asarray(theta, dtype=float))
    phi = np.ravel(np.asarray(phi, dtype=float))
    x = np.cos(theta)
    out = np.empty(((lmax + 1) ** 2, theta.size))
    for m in range(lmax + 1):
        plm = assoc_legendre(m, lmax, x)
        for i, l in enumerate(range(m, lmax + 1)):
            if m == 0:
                out[harmonic_index(l, 0)] = plm[i] * _azimuthal(0, phi)
            else:
                out[harmonic_index(l, m)] = plm[i] * _azimuthal(m, phi)
                out[harmonic_index(l, -m)] = plm[i] * _azimuthal(-m, phi)
    return out


# ---------------------------------------------------------------- model fits

MODELS = {
    # model id -> number of coefficients
    "laurent": 3,  # h0/t + h1 + h2 t, fitted on t*y
    "quadratic": 3,  # S + a t + b t^2
    "inverse": 2,  # S + g/K
    "puiseux": 5,  # S + a√t + b t + c t log t + d t^{3/2}
}


@dataclass
class FitResult:
    coefficients: np.ndarray
    residual_norm: float
    model_id: str
    extra: dict = field(default_factory=dict)


def fit_asymptotic(samples, model_id):
    """Least-squares fit of a small asymptotic model to ``(t, value)`` samples.

    Models: ``"laurent"`` h0/t + h1 + h2·t (fitted on t·value),
    ``"quadratic"`` S + α·t + β·t², ``"inverse"`` S + γ/t and ``"puiseux"``
    S + a√t + b·t + c·t·log t + d·t^{3/2} (Abel sums of deficits decaying like k⁻²).
    """
    if model_id not in MODELS:
        raise InvalidArgument(f"unknown model {model_id!r}")
    arity = MODELS[model_id]
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise InvalidArgument("samples must be a sequence of (t, value) pairs")
    t, y = samples[:, 0], samples[:, 1]
    if len(t) < arity + 2:
        raise InvalidArgument(f"model {model_id} needs at least {arity + 2} samples, got {len(t)}")
    if np.any(t <= 0):
        raise InvalidArgument("all abscissae must be positive")
    if model_id != "inverse" and t.max() < 8.0 * t.min() * (1 - 1e-12):
        raise InvalidArgument("t samples must span at least a factor of 8")

    if model_id == "laurent":
        design = np.vander(t, 3, increasing=True)
        rhs = t * y
    elif model_id == "quadratic":
        design = np.vander(t, 3, increasing=True)
        rhs = y
    elif model_id == "puiseux":
        design = np.column_stack([np.ones_like(t), np.sqrt(t), t, t * np.log(t), t**1.5])
        rhs = y
    else:
        design = np.column_stack([np.ones_like(t), 1.0 / t])
        rhs = y

    scale = np.linalg.norm(design, axis=0)
    if np.any(scale == 0):
        raise FitDegenerateError(f"design matrix for {model_id} has a zero column")
    coef, _, rank, sv = np.linalg.lstsq(design / scale, rhs, rcond=None)
    if rank < arity or sv[-1] < 1e-13 * sv[0]:
        raise FitDegenerateError(f"rank-deficient design matrix for model {model_id}")
    coef = coef / scale
    resid = float(np.linalg.norm(design @ coef - rhs))
    return FitResult(coefficients=coef, residual_norm=resid, model_id=model_id)
