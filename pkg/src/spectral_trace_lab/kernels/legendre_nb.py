import numpy as np

from .._backend import njit


@njit
def plm_table(m, lmax, x):
    n = lmax - m + 1
    npts = x.shape[0]
    out = np.zeros((n, npts))
    for j in range(npts):
        xj = x[j]
        s = np.sqrt(max(0.0, 1.0 - xj * xj))
        p = 1.0 / np.sqrt(2.0)
        for k in range(1, m + 1):
            p *= np.sqrt((2.0 * k + 1.0) / (2.0 * k)) * s
        out[0, j] = p
        if n > 1:
            out[1, j] = np.sqrt(2.0 * m + 3.0) * xj * p
        for i in range(2, n):
            l = m + i
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[i, j] = a * (xj * out[i - 1, j] - b * out[i - 2, j])
    return out


@njit
def plm_flux_table(m, lmax, x, table):
    n = lmax - m + 1
    npts = x.shape[0]
    out = np.zeros((n, npts))
    for i in range(n):
        l = m + i
        c = 0.0
        if i > 0:
            c = np.sqrt((2.0 * l + 1.0) / (2.0 * l - 1.0) * (l - m) * (l + m))
        for j in range(npts):
            v = -l * x[j] * table[i, j]
            if i > 0:
                v += c * table[i - 1, j]
            out[i, j] = v
    return out
