import numpy as np


def plm_table(m, lmax, x):
    x = np.asarray(x, dtype=float)
    n = lmax - m + 1
    out = np.zeros((n, x.size))
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    k = np.arange(1, m + 1)
    # start value P̄_m^m as a product, then the l-recursion row by row
    out[0] = np.prod(np.sqrt((2.0 * k + 1.0) / (2.0 * k))) * s**m / np.sqrt(2.0)
    if n > 1:
        out[1] = np.sqrt(2.0 * m + 3.0) * x * out[0]
    for i in range(2, n):
        l = m + i
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
        b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
        out[i] = a * (x * out[i - 1] - b * out[i - 2])
    return out


def plm_flux_table(m, lmax, x, table):
    l = np.arange(m, lmax + 1, dtype=float)
    out = -l[:, None] * np.asarray(x)[None, :] * table
    lp = l[1:]
    c = np.sqrt((2.0 * lp + 1.0) / (2.0 * lp - 1.0) * (lp - m) * (lp + m))
    out[1:] += c[:, None] * table[:-1]
    return out
