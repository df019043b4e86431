"""Theta functions, heat-coefficient fits, regularized trace sums, Abel
summation, the Sadovnichii–Fazullin constants and the trace identity.

The identity being checked is

    Σ_k Σ_i (μ_ki - k(k+1) - c₀) = V2_q/2 + V2_σ/2 + 1/15
        - (1/60π) ∬(ΔK + K²) dS - (1/24π) ∬(-Δq + 3q² - 2q(K - 1)) dS,

with c₀ = (1/4π)∬q dS and V2 the normalized Liouville mean square of a
flow average. The left side is evaluated from computed spectra both as
partial sums and as an Abel limit.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import geodesics, geometry, spectra
from .errors import (
    AsymptoteMismatchWarning,
    ExtrapolationError,
    InvalidArgument,
    KernelEvaluationError,
    STLabError,
    TailBoundError,
)
from .geometry import FOUR_PI, HeatCoefficients
from .geometry import project_harmonics
from .numerics import fit_asymptotic, gauss_legendre, legendre_P_at_zero

TAIL_RTOL = 1e-12
ABEL_TAIL_TOL = 1e-9
ABEL_T_RANGE = (1e-4, 0.2)
HEAT_FIT_RTOL = 1e-6
ABEL_RESIDUAL_TOL = 1e-5
PARTIAL_RESIDUAL_TOL = 1e-4
SF_AGREEMENT_RTOL = 1e-6


# ----------------------------------------------------------------- theta


class ThetaSeries:
    """t ↦ Σ e^{-λt} over a clustered spectrum, or the exact round-sphere F."""

    def __init__(self, spectrum=None, which="L", name=None):
        self.spectrum = spectrum
        self.which = which
        self.name = name or which
        if spectrum is not None:
            ks = spectrum.ks
            self._lam = spectrum.flat()
            self._K = int(spectrum.k_max_reliable)
            kappa = np.concatenate([np.full(2 * k + 1, k * (k + 1.0)) for k in ks])
            # lower spread of the observed clusters, reused as the band for the unseen tail
            self._band = max(0.0, float(np.max(kappa - self._lam)))

    @classmethod
    def round_sphere(cls):
        return cls(None, "F", "F")

    @property
    def exact(self):
        return self.spectrum is None

    def tail_bound(self, t):
        """Bound on Σ_{k > K} (2k+1) e^{-(k(k+1) - b) t} ≤ e^{bt} e^{-K(K+1)t} / t."""
        if self.exact:
            return 0.0
        K = self._K
        return math.exp(self._band * t - K * (K + 1.0) * t) / t

    def t_min(self):
        if self.exact:
            return 0.0
        K = self._K

        def g(t):
            return (self._band - K * (K + 1.0)) * t - math.log(t) - math.log(TAIL_RTOL * self._partial(t))

        lo, hi = 1e-12, 10.0
        if g(hi) > 0:
            return hi
        return brentq(g, lo, hi, xtol=1e-15, rtol=1e-12)

    def _partial(self, t):
        return float(np.sum(np.exp(-self._lam * t)))

    def __call__(self, t):
        if t <= 0:
            raise InvalidArgument(f"theta needs t > 0, got {t}")
        if self.exact:
            k_cut = int(math.ceil(math.sqrt(40.0 / t))) + 2
            k = np.arange(k_cut + 1, dtype=float)
            return float(np.sum((2 * k + 1) * np.exp(-k * (k + 1) * t)))
        value = self._partial(t)
        if self.tail_bound(t) > TAIL_RTOL * value:
            tmin = self.t_min()
            raise TailBoundError(
                f"t={t:.4g} is below the certified range for clusters k ≤ {self._K}; minimal usable t is {tmin:.4g}",
                t_min=tmin,
            )
        return value


def theta_eval(theta, t):
    """Σ e^{-λt} with truncation error certified below 1e-12 relative."""
    if isinstance(theta, spectra.ClusteredSpectrum):
        theta = ThetaSeries(theta)
    return theta(t)


def default_t_grid(theta, n=9, span=8.0):
    lo = max(1e-4, 1.05 * theta.t_min())
    return np.geomspace(lo, span * lo, n)


@dataclass
class HeatFit:
    coefficients: HeatCoefficients
    residual_norm: float
    t_grid: np.ndarray


def fit_heat_coefficients(theta, t_grid=None, residual_rtol=HEAT_FIT_RTOL):
    """(h0, h1, h2) of h0/t + h1 + h2 t by least squares on t·θ(t)."""
    t_grid = default_t_grid(theta) if t_grid is None else np.asarray(t_grid, dtype=float)
    samples = np.array([(t, theta(t)) for t in t_grid])
    fit = fit_asymptotic(samples, "laurent")
    scale = np.linalg.norm(samples[:, 0] * samples[:, 1])
    if fit.residual_norm > residual_rtol * scale:
        warnings.warn(
            f"heat fit residual {fit.residual_norm:.3g} exceeds {residual_rtol:g} relative; h2 may be unreliable",
            AsymptoteMismatchWarning,
            stacklevel=2,
        )
    h0, h1, h2 = (float(c) for c in fit.coefficients)
    return HeatFit(HeatCoefficients(h0, h1, h2, theta.which), fit.residual_norm, t_grid)


# ------------------------------------------------------------ constants


@dataclass
class SubtractionConstants:
    a0: float
    b0: float
    c0: float


def subtraction_constants(metric, q=None, zeta_L=None, zeta_M=None, heat=None):
    """a₀ = (f₁ - l₁)/f₀, b₀ = (l₁ - m₁)/l₀, c₀ = a₀ + b₀.

    The heat coefficients come from the zeta pipeline unless ``heat`` gives
    fitted (F, L, M) coefficients.
    """
    if heat is not None:
        F, L, M = heat
        f0, f1, l0, l1, m1 = F.h0, F.h1, L.h0, L.h1, M.h1
    else:
        zeta_L = zeta_L or geometry.zeta_values(metric, None)
        zeta_M = zeta_M or (zeta_L if q is None else geometry.zeta_values(metric, q, curv=zeta_L.parts))
        f0, f1 = geometry.ROUND_F.h0, geometry.ROUND_F.h1
        l0, l1, m1 = 1.0, zeta_L.zeta0, zeta_M.zeta0
    a0 = (f1 - l1) / f0
    b0 = (l1 - m1) / l0
    return SubtractionConstants(float(a0), float(b0), float(a0 + b0))


# -------------------------------------------------------- regularized sums


def cluster_deficits(spectrum, c0, K=None):
    """d_k = Σ_i (μ_ki - k(k+1) - c₀) for k ≤ K, shifts taken before summing."""
    K = spectrum.k_max_reliable if K is None else K
    if K > spectrum.k_max_reliable:
        raise InvalidArgument(f"K={K} exceeds k_max_reliable={spectrum.k_max_reliable}")
    ks = np.arange(K + 1)
    d = np.array([np.sum(spectrum.clusters[k] - k * (k + 1.0) - c0) for k in ks])
    return ks, d


@dataclass
class PartialSums:
    K: np.ndarray
    S: np.ndarray
    deficits: np.ndarray


def regularized_partial_sum(spectrum, c0, K=None):
    """S_K = Σ_{k ≤ K} d_k for every K up to the requested one."""
    ks, d = cluster_deficits(spectrum, c0, K)
    return PartialSums(ks, np.cumsum(d), d)


@dataclass
class Extrapolation:
    limit: float
    residual_norm: float
    coefficients: np.ndarray
    model: str
    samples: np.ndarray


def extrapolate_partial_sums(partial, fraction=0.5, residual_tol=PARTIAL_RESIDUAL_TOL):
    """Limit of S_K from the model S + γ/K over the upper ``fraction`` of K."""
    K_max = int(partial.K[-1])
    sel = (partial.K >= max(1, int((1 - fraction) * K_max))) & (partial.K >= 1)
    samples = np.column_stack([partial.K[sel], partial.S[sel]]).astype(float)
    fit = fit_asymptotic(samples, "inverse")
    if fit.residual_norm > residual_tol:
        raise ExtrapolationError(f"partial-sum fit residual {fit.residual_norm:.3g} exceeds {residual_tol:g}")
    return Extrapolation(float(fit.coefficients[0]), fit.residual_norm, fit.coefficients, "inverse", samples)


def _abel_tail(ks, d, t):
    """Σ_{k > K} |d_k| e^{-k(k+1)t} bounded with the per-eigenvalue deficit of the last clusters."""
    K = int(ks[-1])
    tail_k = ks[-5:]
    per_eig = float(np.max(np.abs(d[-5:]) / (2 * tail_k + 1)))
    return per_eig * math.exp(-K * (K + 1.0) * t) / t


def abel_t_min(ks, d, tol=ABEL_TAIL_TOL):
    """Smallest t in the admissible range whose tail bound is below ``tol``."""
    lo, hi = ABEL_T_RANGE
    if _abel_tail(ks, d, lo) <= tol:
        return lo
    if _abel_tail(ks, d, hi) > tol:
        raise TailBoundError(f"no admissible Abel parameter in [{lo}, {hi}] meets the tail bound {tol:g}")
    K = float(ks[-1])
    log_per_eig = math.log(_abel_tail(ks, d, lo) * lo) + K * (K + 1.0) * lo
    root = brentq(lambda t: log_per_eig - K * (K + 1.0) * t - math.log(t) - math.log(tol), lo, hi, xtol=1e-14)
    # step just past the root so the returned t passes the guard in abel_sum
    return min(hi, root * (1 + 1e-9))


def abel_sum(spectrum, c0, t, deficits=None):
    """G(t) = Σ_k e^{-k(k+1)t} d_k over the reliable clusters."""
    lo, hi = ABEL_T_RANGE
    if not lo <= t <= hi:
        raise InvalidArgument(f"Abel parameter t={t} outside [{lo}, {hi}]")
    ks, d = cluster_deficits(spectrum, c0) if deficits is None else deficits
    bound = _abel_tail(ks, d, t)
    if bound > ABEL_TAIL_TOL:
        raise TailBoundError(f"Abel tail bound {bound:.3g} at t={t:.4g} exceeds {ABEL_TAIL_TOL:g}",
                             t_min=abel_t_min(ks, d))
    return float(np.sum(np.exp(-ks * (ks + 1.0) * t) * d))


def default_abel_grid(t_lo=1e-4, n=9, span=16.0):
    return np.geomspace(t_lo, span * t_lo, n)


def abel_extrapolate(samples, model="quadratic", residual_tol=ABEL_RESIDUAL_TOL):
    """t → 0 limit of (t, G(t)) samples from S + αt + βt² (or the Puiseux model)."""
    samples = np.asarray(samples, dtype=float)
    fit = fit_asymptotic(samples, model)
    if fit.residual_norm > residual_tol:
        raise ExtrapolationError(f"Abel fit residual {fit.residual_norm:.3g} exceeds {residual_tol:g} ({model})")
    return Extrapolation(float(fit.coefficients[0]), fit.residual_norm, fit.coefficients, model, samples)


# ------------------------------------------------------- S–F constants


@dataclass
class SFConstants:
    c0: float
    c1: float
    integral_spectral: float
    integral_direct: float
    relative_agreement: float


def _band(q):
    if q.harmonics is not None:
        return max(l for l, _ in q.harmonics)
    if q.band is None:
        raise InvalidArgument("potential needs a band limit for the spectral route")
    return int(q.band)


def _kernel_integral_direct(q, band, n_d=64):
    """∬ q(ω) q(ω₀) / |sin d| dω dω₀ in geodesic polar coordinates about ω.

    dω₀ = sin d dd dβ cancels the kernel singularity, leaving ∫₀^π ∫₀^{2π} q dβ dd.
    """
    outer = gauss_legendre(band + 4)
    n_phi = 2 * band + 4
    theta = np.arccos(outer.nodes)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.outer(outer.weights, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    om = geometry.embed("z", T.ravel(), P.ravel())
    # orthonormal tangent frame at each outer point
    e1 = np.stack(geometry.chart_frame("z", T.ravel(), P.ravel())[0])
    e2 = np.cross(om, e1, axis=0)
    inner_rule = gauss_legendre(n_d, 0.0, np.pi)
    n_beta = 2 * band + 4
    beta = 2 * np.pi * np.arange(n_beta) / n_beta
    inner = np.zeros(om.shape[1])
    for d, wd in zip(inner_rule.nodes, inner_rule.weights):
        for b in beta:
            pts = np.cos(d) * om + np.sin(d) * (np.cos(b) * e1 + np.sin(b) * e2)
            inner += wd * (2 * np.pi / n_beta) * q.at_points(pts)
    return float(np.sum(W * q.at_points(om) * inner))


def sf_constants(q, lmax=None):
    """(c₀, c₁) with the kernel integral by Funk–Hecke (A) and by direct quadrature (B)."""
    band = _band(q) if lmax is None else int(lmax)
    coef = project_harmonics(q, band)
    int_q = coef[(0, 0)] * math.sqrt(FOUR_PI)
    int_q2 = sum(c * c for c in coef.values())
    spectral = sum(2 * math.pi**2 * legendre_P_at_zero(l) ** 2 * c * c for (l, _), c in coef.items())
    direct = _kernel_integral_direct(q, band)
    # odd potentials give an exactly vanishing integral, so measure against ∬q² as well
    scale = max(abs(spectral), abs(direct), int_q2)
    agreement = abs(spectral - direct) / scale if scale > 0 else 0.0
    if agreement > SF_AGREEMENT_RTOL:
        raise KernelEvaluationError(
            f"kernel integral methods disagree: spectral {spectral:.12g}, direct {direct:.12g}"
        )
    c0 = int_q / FOUR_PI
    c1 = spectral / (32 * math.pi**3) - int_q2 / (16 * math.pi)
    return SFConstants(float(c0), float(c1), float(spectral), float(direct), float(agreement))


# ------------------------------------------------------------- right side


RHS_TERMS = ("V2_q/2", "V2_sigma/2", "1/15", "curvature", "potential")


@dataclass
class RHS:
    terms: dict
    value: float
    details: dict = field(default_factory=dict)


def _sum_terms(terms):
    total = 0.0
    for name in RHS_TERMS:
        total += terms[name]
    return total


def theorem_rhs(metric, q=None, liouville=(24, 32, 48), V2_q=None, V2_sigma=None, curv=None, pot=None):
    """Itemized right side: V2_q/2 + V2_σ/2 + 1/15 + curvature term + potential term.

    The potential term uses 2q(K - 1). V2_σ is exactly 0 on the round sphere
    (K ≡ 1 there, so σ vanishes).
    """
    details = {}
    q_zero = q is None or q.is_zero
    curv = curv or geometry.curvature_integrals(metric)
    if q_zero:
        pot = {"int_q": 0.0, "int_q2": 0.0, "int_lapq": 0.0, "int_qK": 0.0}
    else:
        pot = pot or geometry.potential_integrals(metric, q)
    if V2_q is None:
        if q_zero:
            V2_q = 0.0
        else:
            res = geodesics.liouville_mean_square(metric, q, *liouville)
            V2_q = res.value
            details["V2_q_error"] = res.error
            details["q_av_mean"] = res.mean
    if V2_sigma is None:
        if metric.is_round:
            V2_sigma = 0.0
        else:
            res = geodesics.liouville_mean_square(metric, "sigma", *liouville)
            V2_sigma = res.value
            details["V2_sigma_error"] = res.error
            details["sigma_av_mean"] = res.mean
    int_q_km1 = pot["int_qK"] - pot["int_q"]
    terms = {
        "V2_q/2": 0.5 * V2_q,
        "V2_sigma/2": 0.5 * V2_sigma,
        "1/15": 1.0 / 15.0,
        "curvature": -(curv["int_lapK"] + curv["int_K2"]) / (60 * math.pi),
        "potential": -(-pot["int_lapq"] + 3 * pot["int_q2"] - 2 * int_q_km1) / (24 * math.pi),
    }
    details.update(V2_q=V2_q, V2_sigma=V2_sigma, curv=dict(curv), pot=dict(pot))
    return RHS(terms, _sum_terms(terms), details)


def otvet3_rhs(consts, zeta_L, zeta_M, V2_q, V2_sigma, f=geometry.ROUND_F):
    """f₂ - a₀f₁ + V2_σ/2 - m₂ - b₀l₁ + V2_q/2 with m₂ = -ζ_M(1), l₁ = ζ_L(0)."""
    m2 = -zeta_M.zeta1
    l1 = zeta_L.zeta0
    return f.h2 - consts.a0 * f.h1 + 0.5 * V2_sigma - m2 - consts.b0 * l1 + 0.5 * V2_q


# ------------------------------------------------------------- verification


@dataclass
class TraceConfig:
    L_max: int = 60
    abel_t_grid: tuple = None
    abel_model: str = "quadratic"
    partial_fraction: float = 0.5
    liouville: tuple = (24, 32, 48)
    extra_basis: int = 30
    fit_heat: bool = True
    heat_t_grid: tuple = None


@dataclass
class TraceReport:
    metric: str
    potential: str
    lhs_partial_sums: dict
    lhs_abel: dict
    rhs_value: float
    rhs_terms: dict
    discrepancy: float
    discrepancy_partial: float
    constants: dict
    heat: dict
    otvet3: dict
    diagnostics: dict

    def to_dict(self):
        return asdict(self)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except STLabError as exc:
        exc.stage = f"{name}: {exc.stage}" if not str(getattr(exc, "stage", "")).startswith(name) else exc.stage
        raise


def verify_trace(metric, q=None, config=None):
    """Left side by partial sums and Abel limit, right side by :func:`theorem_rhs`."""
    cfg = config or TraceConfig()
    if q is not None and q.is_zero:
        q = None
    zeta_L = _stage("zeta", geometry.zeta_values, metric, None)
    zeta_M = zeta_L if q is None else _stage("zeta", geometry.zeta_values, metric, q, curv=zeta_L.parts)
    zeta_M_alt = None if q is None else _stage("zeta", geometry.zeta_values, metric, q, gamma="K-1", curv=zeta_L.parts)
    consts = subtraction_constants(metric, q, zeta_L, zeta_M)

    if metric.is_round:
        mu = _stage("spectrum", spectra.sphere_galerkin, q, cfg.L_max)
        lam = _stage("spectrum", spectra.sphere_galerkin, None, cfg.L_max) if cfg.fit_heat else None
    else:
        mu = _stage("spectrum", spectra.revolution_spectrum, metric, q, cfg.L_max, cfg.extra_basis)
        lam = mu if q is None else _stage("spectrum", spectra.revolution_spectrum, metric, None, cfg.L_max,
                                          cfg.extra_basis)

    ks, d = cluster_deficits(mu, consts.c0)
    partial = PartialSums(ks, np.cumsum(d), d)
    part_ex = _stage("partial-sums", extrapolate_partial_sums, partial, cfg.partial_fraction)
    if cfg.abel_t_grid is None:
        t_grid = default_abel_grid(_stage("abel", abel_t_min, ks, d))
    else:
        t_grid = np.asarray(cfg.abel_t_grid, dtype=float)
    abel_samples = np.array([(t, abel_sum(mu, consts.c0, t, (ks, d))) for t in t_grid])
    abel_ex = _stage("abel", abel_extrapolate, abel_samples, cfg.abel_model)

    rhs = _stage("rhs", theorem_rhs, metric, q, cfg.liouville, curv=zeta_L.parts,
                 pot=None if q is None else zeta_M.parts)
    V2_q, V2_s = rhs.details["V2_q"], rhs.details["V2_sigma"]

    otvet3 = {"gamma=K": otvet3_rhs(consts, zeta_L, zeta_M, V2_q, V2_s)}
    otvet3["gamma=K-1"] = otvet3["gamma=K"] if zeta_M_alt is None else otvet3_rhs(consts, zeta_L, zeta_M_alt, V2_q, V2_s)
    otvet3 = {k: {"value": v, "discrepancy": abs(abel_ex.limit - v)} for k, v in otvet3.items()}

    heat = {
        "zeta": {
            "F": geometry.ROUND_F.as_tuple(),
            "L": (1.0, zeta_L.zeta0, -zeta_L.zeta1),
            "M": (1.0, zeta_M.zeta0, -zeta_M.zeta1),
        }
    }
    if cfg.fit_heat:
        fits = {}
        grid = None if cfg.heat_t_grid is None else np.asarray(cfg.heat_t_grid)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AsymptoteMismatchWarning)
            fits["F"] = fit_heat_coefficients(ThetaSeries.round_sphere(), grid)
            fits["L"] = fit_heat_coefficients(ThetaSeries(lam, "L"), grid)
            fits["M"] = fit_heat_coefficients(ThetaSeries(mu, "M"), grid)
        heat["fit"] = {k: v.coefficients.as_tuple() for k, v in fits.items()}
        heat["fit_residual"] = {k: v.residual_norm for k, v in fits.items()}
        heat["fit_warnings"] = [str(w.message) for w in caught]
        heat["fit_t_grid"] = {k: [float(fits[k].t_grid[0]), float(fits[k].t_grid[-1])] for k in fits}

    return TraceReport(
        metric=metric.name,
        potential="0" if q is None else q.name,
        lhs_partial_sums={
            "K": partial.K.tolist(),
            "S_K": partial.S.tolist(),
            "deficits": partial.deficits.tolist(),
            "limit": part_ex.limit,
            "fit_residual": part_ex.residual_norm,
        },
        lhs_abel={
            "t": abel_samples[:, 0].tolist(),
            "G_t": abel_samples[:, 1].tolist(),
            "limit": abel_ex.limit,
            "fit_residual": abel_ex.residual_norm,
            "model": abel_ex.model,
        },
        rhs_value=rhs.value,
        rhs_terms=dict(rhs.terms),
        discrepancy=abs(abel_ex.limit - rhs.value),
        discrepancy_partial=abs(part_ex.limit - rhs.value),
        constants={"a0": consts.a0, "b0": consts.b0, "c0": consts.c0},
        heat=heat,
        otvet3=otvet3,
        diagnostics={
            "k_max_reliable": int(mu.k_max_reliable),
            "solver": mu.provenance.get("solver"),
            "L_max": cfg.L_max,
            "abel_partial_agreement": abs(abel_ex.limit - part_ex.limit),
            "tolerances": {
                "abel_residual": ABEL_RESIDUAL_TOL,
                "partial_residual": PARTIAL_RESIDUAL_TOL,
                "theta_tail_rtol": TAIL_RTOL,
            },
            **{k: v for k, v in rhs.details.items() if k not in ("curv", "pot")},
        },
    )
