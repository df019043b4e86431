"""Eigenvalues of -Δ + q and their grouping into clusters of size 2k + 1.

Round sphere: Galerkin in real orthonormal spherical harmonics. For a zonal
potential the matrix splits into one banded block per azimuthal order m,
tridiagonal when q is a multiple of cos θ plus a constant.

Surfaces of revolution (ds² = (1 + h)² dθ² + sin²θ dφ²) with zonal q:
separated problem per m in x = cos θ,

    S_ll' = ∫ [(1 - x²)/a · P'_l P'_l' + a m²/(1 - x²) · P_l P_l' + a q P_l P_l'] dx
    M_ll' = ∫ a P_l P_l' dx,        a = 1 + h(x),

solved as the generalized symmetric problem S c = λ M c in the orthonormal
associated Legendre basis P̄_l^m, l = m, m + 1, ...
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import ClusterIntegrityError, DiscretizationError, InvalidArgument
from .geometry import MetricPatch, ScalarField
from .numerics import assoc_legendre, assoc_legendre_flux, gauss_legendre, harmonic_index, sph_harm_table

SYMMETRY_TOL = 1e-10
RELIABILITY_BUFFER = 4


@dataclass
class OperatorSpec:
    metric: MetricPatch
    potential: ScalarField = None
    L_max: int = 60

    def __post_init__(self):
        if self.L_max < 8:
            raise InvalidArgument(f"L_max must be at least 8, got {self.L_max}")


@dataclass
class ClusteredSpectrum:
    """Eigenvalues grouped by cluster index k; cluster k holds 2k + 1 values."""

    clusters: dict
    k_max_reliable: int
    provenance: dict = field(default_factory=dict)

    @property
    def ks(self):
        return np.array(sorted(self.clusters))

    def flat(self):
        return np.concatenate([self.clusters[k] for k in sorted(self.clusters)])

    def cluster_sums(self):
        return np.array([np.sum(self.clusters[k]) for k in sorted(self.clusters)])

    def shifted(self, c):
        return ClusteredSpectrum({k: v + c for k, v in self.clusters.items()}, self.k_max_reliable,
                                 dict(self.provenance, shift=c))

    def truncated(self, k_cap):
        return ClusteredSpectrum({k: v for k, v in self.clusters.items() if k <= k_cap},
                                 min(self.k_max_reliable, k_cap), dict(self.provenance))


def _validate_sizes(clusters, k_cap):
    for k in range(k_cap + 1):
        n = len(clusters.get(k, ()))
        if n != 2 * k + 1:
            raise ClusterIntegrityError(f"cluster k={k} has {n} eigenvalues, expected {2 * k + 1}", k=k)


def cluster_index(lam, center=0.0):
    """k = round((-1 + √(1 + 4(λ - center))) / 2), clipped at 0."""
    lam = np.asarray(lam, dtype=float) - center
    return np.rint((-1.0 + np.sqrt(np.maximum(1.0 + 4.0 * lam, 0.0))) / 2.0).astype(int)


def assemble_clusters(eigenvalues, k_cap, center=0.0, provenance=None):
    """Group a flat eigenvalue list by nearest k(k + 1) and validate sizes up to ``k_cap``.

    ``center`` is subtracted before rounding (use it for a known constant
    offset larger than the half-gap). Clusters above ``k_cap`` are dropped.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    ks = cluster_index(lam, center)
    clusters = {int(k): lam[ks == k] for k in np.unique(ks) if k <= k_cap}
    _validate_sizes(clusters, k_cap)
    return ClusteredSpectrum(clusters, int(k_cap), dict(provenance or {}, assembly="nearest"))


def clusters_from_labels(values, labels, k_cap, provenance=None):
    """Cluster spectrum from eigenvalues with known cluster labels."""
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels, dtype=int)
    order = np.lexsort((values, labels))
    values, labels = values[order], labels[order]
    clusters = {}
    for k in range(k_cap + 1):
        clusters[k] = values[labels == k]
    _validate_sizes(clusters, k_cap)
    return ClusteredSpectrum(clusters, int(k_cap), dict(provenance or {}, assembly="labels"))


# --------------------------------------------------------------- round sphere


def _potential_band(q):
    if q.harmonics is not None:
        return max((l for (l, _), c in q.harmonics.items() if c != 0), default=0)
    if q.band is None:
        raise InvalidArgument(f"potential {q.name!r} needs a band limit for the Galerkin solver")
    return int(q.band)


def _is_cos_family(q):
    return q.harmonics is not None and all(key in ((0, 0), (1, 0)) for key in q.harmonics)


def cos_matrix_element(l, m):
    """⟨Y_{l+1,m}| cos θ |Y_{l,m}⟩ = √(((l+1)² - m²) / ((2l+1)(2l+3)))."""
    return np.sqrt(((l + 1.0) ** 2 - m * m) / ((2.0 * l + 1.0) * (2.0 * l + 3.0)))


def _tridiagonal_block(q, m, L_max):
    l = np.arange(m, L_max + 1, dtype=float)
    c00 = q.harmonics.get((0, 0), 0.0) / np.sqrt(4 * np.pi)
    c10 = q.harmonics.get((1, 0), 0.0) * np.sqrt(3.0 / (4 * np.pi))
    diag = l * (l + 1.0) + c00
    off = c10 * cos_matrix_element(l[:-1], m)
    if off.size == 0:
        return diag
    return sla.eigvalsh_tridiagonal(diag, off)


def _zonal_values(q, x):
    return np.asarray(q(np.arccos(x), np.zeros_like(x)), dtype=float)


def _banded_block(q, m, L_max, band, rule):
    P = assoc_legendre(m, L_max, rule.nodes)
    qw = _zonal_values(q, rule.nodes) * rule.weights
    Q = (P * qw) @ P.T
    asym = np.max(np.abs(Q - Q.T)) if Q.size else 0.0
    if asym > SYMMETRY_TOL:
        raise DiscretizationError(f"potential block m={m} not symmetric ({asym:.3g})")
    n = Q.shape[0]
    l = np.arange(m, L_max + 1, dtype=float)
    Q[np.diag_indices(n)] += l * (l + 1.0)
    bw = min(band, n - 1)
    ab = np.zeros((bw + 1, n))
    for d in range(bw + 1):
        ab[d, : n - d] = np.diagonal(Q, -d)
    return sla.eig_banded(ab, lower=True, eigvals_only=True)


def _dense_matrix(q, L_max, band):
    n_x = L_max + band // 2 + 2
    n_phi = 2 * L_max + band + 2
    rule = gauss_legendre(n_x)
    theta = np.arccos(rule.nodes)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    T, Ph = np.meshgrid(theta, phi, indexing="ij")
    W = np.outer(rule.weights, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    Y = sph_harm_table(L_max, T.ravel(), Ph.ravel())
    Q = (Y * (np.asarray(q(T, Ph), float).ravel() * W)) @ Y.T
    asym = np.max(np.abs(Q - Q.T))
    if asym > SYMMETRY_TOL:
        raise DiscretizationError(f"potential matrix not symmetric ({asym:.3g})")
    return 0.5 * (Q + Q.T)


def sphere_galerkin(q, L_max, analytic=True):
    """Spectrum of -Δ + q on the round sphere in the harmonic basis of degree ≤ L_max."""
    if L_max < 8:
        raise InvalidArgument(f"L_max must be at least 8, got {L_max}")
    if q is None or q.is_zero:
        ks = np.concatenate([np.full(2 * k + 1, k) for k in range(L_max + 1)])
        return clusters_from_labels(ks * (ks + 1.0), ks, L_max, {"solver": "exact", "L_max": L_max})
    band = _potential_band(q)
    k_cap = L_max - band - RELIABILITY_BUFFER
    if k_cap < 0:
        raise InvalidArgument(f"L_max={L_max} too small for a potential of band {band}")
    vals, labels = [], []
    if q.zonal:
        use_tri = analytic and _is_cos_family(q)
        rule = None if use_tri else gauss_legendre(L_max + band + 2)
        for m in range(L_max + 1):
            if use_tri:
                ev = _tridiagonal_block(q, m, L_max)
            else:
                ev = _banded_block(q, m, L_max, band, rule)
            ks = m + np.arange(ev.size)
            reps = 1 if m == 0 else 2
            vals.append(np.repeat(ev, reps))
            labels.append(np.repeat(ks, reps))
        solver = "galerkin-tridiagonal" if use_tri else "galerkin-banded"
        vals, labels = np.concatenate(vals), np.concatenate(labels)
    else:
        Q = _dense_matrix(q, L_max, band)
        l = np.array([l for l in range(L_max + 1) for _ in range(2 * l + 1)], dtype=float)
        Q[np.diag_indices_from(Q)] += l * (l + 1.0)
        vals = np.sort(sla.eigvalsh(Q))
        # Weyl's inequality keeps the sorted spectrum within ‖q‖∞ of the sorted k(k+1)
        labels = l.astype(int)
        solver = "galerkin-dense"
    return clusters_from_labels(vals, labels, k_cap, {"solver": solver, "L_max": L_max, "band": band})


# ------------------------------------------------------- separated solver


def _revolution_block(profile, q, m, n_basis, n_quad):
    rule = gauss_legendre(n_quad)
    x, w = rule.nodes, rule.weights
    lmax = m + n_basis - 1
    P = assoc_legendre(m, lmax, x)
    F = assoc_legendre_flux(m, lmax, x, P)
    a = profile.a(x)
    one = 1.0 - x * x
    S = (F * (w / (one * a))) @ F.T + (P * (w * a * m * m / one)) @ P.T
    if q is not None:
        S += (P * (w * a * _zonal_values(q, x))) @ P.T
    M = (P * (w * a)) @ P.T
    for name, mat in (("stiffness", S), ("mass", M)):
        asym = np.max(np.abs(mat - mat.T))
        if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(mat))):
            raise DiscretizationError(f"{name} matrix for m={m} not symmetric ({asym:.3g})")
    return sla.eigh(S, M, eigvals_only=True)


def zoll_separated_solver(metric, q=None, m=0, n_grid=64, n_quad=None):
    """Eigenvalues of the separated problem for azimuthal order ``m``.

    ``n_grid`` is the number of Legendre basis functions (degrees m .. m + n_grid - 1);
    the j-th eigenvalue belongs to cluster k = |m| + j.
    """
    if metric.profile is None or metric.axis != "z":
        raise InvalidArgument("the separated solver needs a metric of revolution about the z-axis")
    if q is not None and not q.zonal:
        raise InvalidArgument("the separated solver needs a zonal potential")
    if n_grid < 1:
        raise InvalidArgument(f"n_grid must be positive, got {n_grid}")
    m = abs(int(m))
    n_quad = n_quad or m + n_grid + 40
    return _revolution_block(metric.profile, q, m, n_grid, n_quad)


def revolution_spectrum(metric, q=None, L_max=60, extra=30):
    """Clusters k ≤ L_max from the separated solver, basis padded by ``extra`` degrees."""
    if L_max < 8:
        raise InvalidArgument(f"L_max must be at least 8, got {L_max}")
    if q is not None and q.is_zero:
        q = None
    vals, labels = [], []
    for m in range(L_max + 1):
        keep = L_max - m + 1
        ev = zoll_separated_solver(metric, q, m, n_grid=keep + extra)[:keep]
        reps = 1 if m == 0 else 2
        vals.append(np.repeat(ev, reps))
        labels.append(np.repeat(m + np.arange(keep), reps))
    return clusters_from_labels(np.concatenate(vals), np.concatenate(labels), L_max,
                                {"solver": "separated-galerkin", "L_max": L_max, "extra": extra})


def solve(spec):
    """Dispatch an :class:`OperatorSpec` to the appropriate solver."""
    q = spec.potential
    if spec.metric.is_round:
        return sphere_galerkin(q, spec.L_max)
    return revolution_spectrum(spec.metric, q, spec.L_max)


# ----------------------------------------------------------------- statistics


@dataclass
class ClusterStats:
    k: np.ndarray
    sum_shift: np.ndarray
    mean_shift: np.ndarray
    sum_sq_shift: np.ndarray


def cluster_statistics(spectrum, reference=None):
    """Per-cluster sums of shifts, mean shift and sum of squared shifts.

    ``reference`` is None (shifts from k(k + 1)) or a second spectrum with
    the same cluster layout (shifts matched in sorted order).
    """
    ks = spectrum.ks
    out = np.zeros((3, ks.size))
    for i, k in enumerate(ks):
        lam = spectrum.clusters[k]
        if reference is None:
            ref = k * (k + 1.0)
        else:
            if k not in reference.clusters or len(reference.clusters[k]) != len(lam):
                raise ClusterIntegrityError(f"cluster k={k} is not aligned with the reference", k=k)
            ref = reference.clusters[k]
        d = lam - ref
        out[:, i] = d.sum(), d.mean(), np.sum(d * d)
    return ClusterStats(ks, out[0], out[1], out[2])
