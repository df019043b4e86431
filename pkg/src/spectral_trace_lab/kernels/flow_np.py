"""Batch geodesic flow on revolution metrics, vectorised over trajectories."""

import numpy as np

NSTATE = 10
SWITCH_COS = np.cos(0.3)


def _horner(c, x):
    acc = np.zeros_like(x)
    for coef in c[::-1]:
        acc = acc * x + coef
    return acc


def _geometry(th, ph, axis, polys):
    s, c = np.sin(th), np.cos(th)
    sp, cp = np.sin(ph), np.cos(ph)
    x1 = axis == 1
    zero = np.zeros_like(th)
    z = np.where(x1, s * sp, c)
    zt = np.where(x1, c * sp, -s)
    zp = np.where(x1, s * cp, zero)
    ztt = np.where(x1, -s * sp, -c)
    ztp = np.where(x1, c * cp, zero)
    zpp = np.where(x1, -s * sp, zero)
    w = _horner(polys[0], z)
    w1 = _horner(polys[1], z)
    A = 1.0 + w * zt**2
    B = w * zt * zp
    C = s**2 + w * zp**2
    At = w1 * zt**3 + 2 * w * zt * ztt
    Ap = w1 * zp * zt**2 + 2 * w * zt * ztp
    Bt = w1 * zt**2 * zp + w * (ztt * zp + zt * ztp)
    Bp = w1 * zp**2 * zt + w * (ztp * zp + zt * zpp)
    Ct = 2 * s * c + w1 * zt * zp**2 + 2 * w * zp * ztp
    Cp = w1 * zp**3 + 2 * w * zp * zpp
    return A, B, C, At, Ap, Bt, Bp, Ct, Cp, w, z


def _frame(th, ph, axis):
    s, c = np.sin(th), np.cos(th)
    sp, cp = np.sin(ph), np.cos(ph)
    x1 = axis == 1
    om = np.where(x1, np.stack([c, s * cp, s * sp]), np.stack([s * cp, s * sp, c]))
    et = np.where(x1, np.stack([-s, c * cp, c * sp]), np.stack([c * cp, c * sp, -s]))
    ep = np.where(
        x1, np.stack([np.zeros_like(s), -s * sp, s * cp]), np.stack([-s * sp, s * cp, np.zeros_like(s)])
    )
    return om, et, ep


def _curvature(z, polys):
    a = _horner(polys[2], z)
    da = _horner(polys[3], z)
    d2a = _horner(polys[4], z)
    k = (a - z * da) / a**3
    dk = -(z * d2a * a + 3 * (a - z * da) * da) / a**4
    return k, dk


def _velocity(y, g):
    A, B, C = g[0], g[1], g[2]
    D = A * C - B * B
    return (C * y[2] - B * y[3]) / D, (-B * y[2] + A * y[3]) / D


def _normal_height(th, ph, axis, v1, v2, w):
    om, et, ep = _frame(th, ph, axis)
    V = v1 * et + v2 * ep
    N = np.cross(om, V, axis=0)
    gNV = np.sum(N * V, axis=0) + w * N[2] * V[2]
    gVV = np.sum(V * V, axis=0) + w * V[2] ** 2
    nu = N - (gNV / gVV) * V
    gnn = np.sum(nu * nu, axis=0) + w * nu[2] ** 2
    return nu[2] / np.sqrt(gnn)


def _rhs(y, axis, polys, jacobi):
    g = _geometry(y[0], y[1], axis, polys)
    A, B, C, At, Ap, Bt, Bp, Ct, Cp, w, z = g
    v1, v2 = _velocity(y, g)
    out = np.zeros_like(y)
    out[0] = v1
    out[1] = v2
    out[2] = 0.5 * (At * v1**2 + 2 * Bt * v1 * v2 + Ct * v2**2)
    out[3] = 0.5 * (Ap * v1**2 + 2 * Bp * v1 * v2 + Cp * v2**2)
    if jacobi:
        k, dk = _curvature(z, polys)
        kv = dk * _normal_height(y[0], y[1], axis, v1, v2, w)
        out[4] = y[5]
        out[5] = -k * y[4]
        out[6] = y[7]
        out[7] = -k * y[6]
        out[8] = kv * y[6] ** 3
        out[9] = kv * y[4] * y[6] ** 2
    return out


def _ambient(y, axis, polys):
    g = _geometry(y[0], y[1], axis, polys)
    v1, v2 = _velocity(y, g)
    om, et, ep = _frame(y[0], y[1], axis)
    H = 0.5 * (v1 * y[2] + v2 * y[3])
    return om, v1 * et + v2 * ep, H, v1, v2, g


def _switch_chart(y, axis, polys, mask):
    om, V, _, _, _, _ = _ambient(y, axis, polys)
    new = 1 - axis
    to_x = new == 1
    th = np.where(to_x, np.arccos(np.clip(om[0], -1, 1)), np.arccos(np.clip(om[2], -1, 1)))
    ph = np.where(to_x, np.arctan2(om[2], om[1]), np.arctan2(om[1], om[0]))
    _, et, ep = _frame(th, ph, new)
    v1 = np.sum(V * et, axis=0)
    v2 = np.sum(V * ep, axis=0) / np.sin(th) ** 2
    A, B, C = _geometry(th, ph, new, polys)[:3]
    y[0] = np.where(mask, th, y[0])
    y[1] = np.where(mask, ph, y[1])
    y[2] = np.where(mask, A * v1 + B * v2, y[2])
    y[3] = np.where(mask, B * v1 + C * v2, y[3])
    return np.where(mask, new, axis)


def geodesic_batch(polys, states, axes, length, n_out, n_sub, jacobi):
    """Vectorised counterpart of the loop kernel, same signature and outputs."""
    n = states.shape[0]
    y = np.zeros((NSTATE, n))
    y[:4] = states[:, :4].T
    y[4] = 1.0
    y[7] = 1.0
    axis = np.asarray(axes, dtype=np.int64).copy()
    h = length / (n_out * n_sub)
    pos = np.zeros((n, n_out + 1, 3))
    vel = np.zeros((n, n_out + 1, 3))
    jac = np.zeros((n, n_out + 1, 6))
    hdrift = np.zeros(n)
    for j in range(n_out + 1):
        if j > 0:
            for _ in range(n_sub):
                k1 = _rhs(y, axis, polys, jacobi)
                k2 = _rhs(y + 0.5 * h * k1, axis, polys, jacobi)
                k3 = _rhs(y + 0.5 * h * k2, axis, polys, jacobi)
                k4 = _rhs(y + h * k3, axis, polys, jacobi)
                y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        om, V, H, v1, v2, g = _ambient(y, axis, polys)
        pos[:, j] = om.T
        vel[:, j] = V.T
        hdrift = np.maximum(hdrift, np.abs(H - 0.5))
        if jacobi:
            k, dk = _curvature(om[2], polys)
            jac[:, j, 0] = k
            jac[:, j, 1] = dk * _normal_height(y[0], y[1], axis, v1, v2, g[9])
            jac[:, j, 2] = y[4]
            jac[:, j, 3] = y[6]
            jac[:, j, 4] = y[8]
            jac[:, j, 5] = y[9]
        mask = np.abs(np.cos(y[0])) > SWITCH_COS
        if np.any(mask):
            axis = _switch_chart(y, axis, polys, mask)
    return pos, vel, jac, hdrift, y.T.copy(), axis
