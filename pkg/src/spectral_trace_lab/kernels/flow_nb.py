"""Batch geodesic flow on revolution metrics, scalar loops for numba.

State per trajectory: θ, φ, p_θ, p_φ in the current polar chart, the two
Jacobi solutions (u, u', v, v') and the running integrals
I3 = ∫ K_ν v³ and I1 = ∫ K_ν u v² used by the averaged curvature symbol.
Chart 0 has its axis along ambient z, chart 1 along ambient x.
"""

import numpy as np

from .._backend import njit

NSTATE = 10
SWITCH_COS = np.cos(0.3)


@njit
def _horner(c, x):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


@njit
def _geometry(th, ph, axis, polys):
    """Metric coefficients, first partials and ambient data at a chart point."""
    s, c = np.sin(th), np.cos(th)
    sp, cp = np.sin(ph), np.cos(ph)
    if axis == 0:
        z, zt, zp, ztt, ztp, zpp = c, -s, 0.0, -c, 0.0, 0.0
    else:
        z, zt, zp, ztt, ztp, zpp = s * sp, c * sp, s * cp, -s * sp, c * cp, -s * sp
    w = _horner(polys[0], z)
    w1 = _horner(polys[1], z)
    A = 1.0 + w * zt * zt
    B = w * zt * zp
    C = s * s + w * zp * zp
    At = w1 * zt * zt * zt + 2.0 * w * zt * ztt
    Ap = w1 * zp * zt * zt + 2.0 * w * zt * ztp
    Bt = w1 * zt * zt * zp + w * (ztt * zp + zt * ztp)
    Bp = w1 * zp * zt * zp + w * (ztp * zp + zt * zpp)
    Ct = 2.0 * s * c + w1 * zt * zp * zp + 2.0 * w * zp * ztp
    Cp = w1 * zp * zp * zp + 2.0 * w * zp * zpp
    return A, B, C, At, Ap, Bt, Bp, Ct, Cp, w, z


@njit
def _frame(th, ph, axis):
    s, c = np.sin(th), np.cos(th)
    sp, cp = np.sin(ph), np.cos(ph)
    om = np.empty(3)
    et = np.empty(3)
    ep = np.empty(3)
    if axis == 0:
        om[0], om[1], om[2] = s * cp, s * sp, c
        et[0], et[1], et[2] = c * cp, c * sp, -s
        ep[0], ep[1], ep[2] = -s * sp, s * cp, 0.0
    else:
        om[0], om[1], om[2] = c, s * cp, s * sp
        et[0], et[1], et[2] = -s, c * cp, c * sp
        ep[0], ep[1], ep[2] = 0.0, -s * sp, s * cp
    return om, et, ep


@njit
def _curvature(z, polys):
    a = _horner(polys[2], z)
    da = _horner(polys[3], z)
    d2a = _horner(polys[4], z)
    k = (a - z * da) / a**3
    dk = -(z * d2a * a + 3.0 * (a - z * da) * da) / a**4
    return k, dk


@njit
def _rhs(y, axis, polys, jacobi, out):
    th, ph, p1, p2 = y[0], y[1], y[2], y[3]
    A, B, C, At, Ap, Bt, Bp, Ct, Cp, w, z = _geometry(th, ph, axis, polys)
    D = A * C - B * B
    v1 = (C * p1 - B * p2) / D
    v2 = (-B * p1 + A * p2) / D
    out[0] = v1
    out[1] = v2
    out[2] = 0.5 * (At * v1 * v1 + 2.0 * Bt * v1 * v2 + Ct * v2 * v2)
    out[3] = 0.5 * (Ap * v1 * v1 + 2.0 * Bp * v1 * v2 + Cp * v2 * v2)
    if not jacobi:
        for i in range(4, NSTATE):
            out[i] = 0.0
        return
    k, dk = _curvature(z, polys)
    kv = dk * _normal_height(th, ph, axis, v1, v2, w)
    out[4] = y[5]
    out[5] = -k * y[4]
    out[6] = y[7]
    out[7] = -k * y[6]
    out[8] = kv * y[6] ** 3
    out[9] = kv * y[4] * y[6] ** 2


@njit
def _normal_height(th, ph, axis, v1, v2, w):
    """Ambient z-component of the unit normal ω × γ' made g-orthogonal to γ'."""
    om, et, ep = _frame(th, ph, axis)
    V = v1 * et + v2 * ep
    N = np.empty(3)
    N[0] = om[1] * V[2] - om[2] * V[1]
    N[1] = om[2] * V[0] - om[0] * V[2]
    N[2] = om[0] * V[1] - om[1] * V[0]
    gNV = N[0] * V[0] + N[1] * V[1] + N[2] * V[2] + w * N[2] * V[2]
    gVV = V[0] * V[0] + V[1] * V[1] + V[2] * V[2] + w * V[2] * V[2]
    nu = N - (gNV / gVV) * V
    gnn = nu[0] * nu[0] + nu[1] * nu[1] + nu[2] * nu[2] + w * nu[2] * nu[2]
    return nu[2] / np.sqrt(gnn)


@njit
def _ambient(y, axis, polys):
    A, B, C, At, Ap, Bt, Bp, Ct, Cp, w, z = _geometry(y[0], y[1], axis, polys)
    D = A * C - B * B
    v1 = (C * y[2] - B * y[3]) / D
    v2 = (-B * y[2] + A * y[3]) / D
    om, et, ep = _frame(y[0], y[1], axis)
    H = 0.5 * (v1 * y[2] + v2 * y[3])
    return om, v1 * et + v2 * ep, H


@njit
def _switch_chart(y, axis, polys):
    om, V, _ = _ambient(y, axis, polys)
    new = 1 - axis
    if new == 0:
        th = np.arccos(min(1.0, max(-1.0, om[2])))
        ph = np.arctan2(om[1], om[0])
    else:
        th = np.arccos(min(1.0, max(-1.0, om[0])))
        ph = np.arctan2(om[2], om[1])
    _, et, ep = _frame(th, ph, new)
    s = np.sin(th)
    v1 = V[0] * et[0] + V[1] * et[1] + V[2] * et[2]
    v2 = (V[0] * ep[0] + V[1] * ep[1] + V[2] * ep[2]) / (s * s)
    A, B, C, At, Ap, Bt, Bp, Ct, Cp, w, z = _geometry(th, ph, new, polys)
    y[0] = th
    y[1] = ph
    y[2] = A * v1 + B * v2
    y[3] = B * v1 + C * v2
    return new


@njit
def _rk4(y, axis, h, polys, jacobi, k1, k2, k3, k4, tmp):
    n = y.shape[0]
    _rhs(y, axis, polys, jacobi, k1)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k1[i]
    _rhs(tmp, axis, polys, jacobi, k2)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k2[i]
    _rhs(tmp, axis, polys, jacobi, k3)
    for i in range(n):
        tmp[i] = y[i] + h * k3[i]
    _rhs(tmp, axis, polys, jacobi, k4)
    for i in range(n):
        y[i] += h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0


@njit
def geodesic_batch(polys, states, axes, length, n_out, n_sub, jacobi):
    """Integrate each row of ``states`` (θ, φ, p_θ, p_φ) over ``length``.

    Returns ambient positions and velocities at n_out + 1 uniform samples,
    Jacobi samples (K, K_ν, u, v, I3, I1), max |H - 1/2| and final states.
    """
    n = states.shape[0]
    pos = np.zeros((n, n_out + 1, 3))
    vel = np.zeros((n, n_out + 1, 3))
    jac = np.zeros((n, n_out + 1, 6))
    hdrift = np.zeros(n)
    final = np.zeros((n, NSTATE))
    final_axes = np.zeros(n, dtype=np.int64)
    h = length / (n_out * n_sub)
    y = np.zeros(NSTATE)
    k1 = np.zeros(NSTATE)
    k2 = np.zeros(NSTATE)
    k3 = np.zeros(NSTATE)
    k4 = np.zeros(NSTATE)
    tmp = np.zeros(NSTATE)
    for t in range(n):
        for i in range(4):
            y[i] = states[t, i]
        y[4], y[5], y[6], y[7], y[8], y[9] = 1.0, 0.0, 0.0, 1.0, 0.0, 0.0
        axis = axes[t]
        for j in range(n_out + 1):
            if j > 0:
                for _ in range(n_sub):
                    _rk4(y, axis, h, polys, jacobi, k1, k2, k3, k4, tmp)
            om, V, H = _ambient(y, axis, polys)
            pos[t, j] = om
            vel[t, j] = V
            hdrift[t] = max(hdrift[t], abs(H - 0.5))
            if jacobi:
                z = om[2]
                k, dk = _curvature(z, polys)
                A, B, C, At, Ap, Bt, Bp, Ct, Cp, w, zz = _geometry(y[0], y[1], axis, polys)
                D = A * C - B * B
                v1 = (C * y[2] - B * y[3]) / D
                v2 = (-B * y[2] + A * y[3]) / D
                jac[t, j, 0] = k
                jac[t, j, 1] = dk * _normal_height(y[0], y[1], axis, v1, v2, w)
                jac[t, j, 2] = y[4]
                jac[t, j, 3] = y[6]
                jac[t, j, 4] = y[8]
                jac[t, j, 5] = y[9]
            if abs(np.cos(y[0])) > SWITCH_COS:
                axis = _switch_chart(y, axis, polys)
        final[t] = y
        final_axes[t] = axis
    return pos, vel, jac, hdrift, final, final_axes
