"""Time the numba and numpy kernel backends on the same inputs.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
called once untimed (numba compilation, cache warm-up), then timed ``repeat``
times per backend; the best time is reported with the max abs difference
between backends.
"""

import argparse
import time

import numpy as np

from spectral_trace_lab import geometry
from spectral_trace_lab.geodesics import TWO_PI, kernel_polys, lift_to_cosphere
from spectral_trace_lab.kernels import flow_nb, flow_np, legendre_nb, legendre_np


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def legendre_case(lmax=400, n=2000):
    x = np.cos(np.linspace(0.01, np.pi - 0.01, n))
    return lambda mod: (lambda: np.stack([mod.plm_table(m, lmax, x)[-1] for m in range(0, lmax, 40)]))


def geodesic_case(n=64, n_out=512, n_sub=4):
    metric = geometry.builtin_metric("zoll-of-revolution", eps=0.1)
    rng = np.random.default_rng(0)
    starts = [lift_to_cosphere(metric, (th, 0.0), a)
              for th, a in zip(rng.uniform(0.4, np.pi - 0.4, n), rng.uniform(0, TWO_PI, n))]
    states = np.array([[s.u1, s.u2, s.p1, s.p2] for s in starts])
    axes = np.zeros(n, dtype=np.int64)
    polys = kernel_polys(metric.profile)
    return lambda mod: (lambda: mod.geodesic_batch(polys, states, axes, TWO_PI, n_out, n_sub, True)[0])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    cases = {
        "plm_table (lmax 400, 2000 nodes, 10 orders)": (legendre_case(), legendre_nb, legendre_np),
        "geodesic_batch (64 paths, 2048 RK4 steps, Jacobi)": (geodesic_case(), flow_nb, flow_np),
    }
    print(f"{'kernel':52s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, (make, nb, npy) in cases.items():
        t_nb, out_nb = _best(make(nb), args.repeat)
        t_np, out_np = _best(make(npy), args.repeat)
        diff = float(np.max(np.abs(out_nb - out_np)))
        print(f"{name:52s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
