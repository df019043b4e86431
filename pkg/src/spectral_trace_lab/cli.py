"""Command-line experiment runner.

``spectral-trace-lab <command> --config <path> [--check] [--out <dir>] [--threads N] [--seed N]``

Every command writes ``report.json`` (sorted keys, schema tag embedded) plus
CSV tables into the output directory. Exit codes: 0 success, 1 validation,
2 numerical-stage failure, 3 threshold violation under ``trace-verify --check``.
"""

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, _backend, geodesics, geometry, spectra, traces
from .cache import SpectrumCache, write_atomic
from .config import ExperimentConfig, PotentialConfig, load_config
from .errors import InvalidArgument, STLabError

REPORT_SCHEMA = "stlab-report/1"
COMMANDS = ("curvature", "geodesics", "spectrum", "heat-fit", "trace-verify", "oracle")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 1, 2, 3


# ------------------------------------------------------------------ output


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def render_report(command, cfg, body):
    doc = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "command": command,
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "result": body,
    }
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def render_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    # the schema tag rides along as a constant trailing column so the header stays first
    writer.writerow(list(header) + ["schema"])
    for row in rows:
        cells = [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]
        writer.writerow(cells + [REPORT_SCHEMA])
    return buf.getvalue()


class Artifacts:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.written = []

    def text(self, name, content):
        path = self.directory / name
        write_atomic(path, content)
        self.written.append(str(path))

    def table(self, name, header, rows):
        self.text(name, render_csv(header, rows))


# --------------------------------------------------------------- commands


def _spectrum(cfg, metric, q, cache_dir):
    key = cfg.digest("metric", "potential", "solver")

    def compute():
        if metric.is_round:
            return spectra.sphere_galerkin(q, cfg.solver.L_max)
        return spectra.revolution_spectrum(metric, q, cfg.solver.L_max, cfg.solver.extra_basis)

    return SpectrumCache(cache_dir).get_or_compute(key, compute) + (key,)


def cmd_curvature(cfg, metric, q, out, args):
    c = cfg.curvature
    x = np.cos(np.linspace(0.0, np.pi, c.n_theta + 2)[1:-1])
    theta = np.arccos(x)
    phi = 2 * np.pi * np.arange(c.n_phi) / c.n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    K = geometry.curvature_field(metric)(T, P)
    out.table("curvature_grid.csv", ["theta", "phi", "K"], zip(T.ravel(), P.ravel(), K.ravel()))
    total = geometry.integrate_scalar(metric, geometry.curvature_field(metric), rtol=1e-10)
    return {
        "gauss_bonnet": {"integral_K": total, "target": geometry.FOUR_PI,
                         "error": abs(total - geometry.FOUR_PI)},
        "K_min": float(K.min()),
        "K_max": float(K.max()),
        "grid": [c.n_theta, c.n_phi],
    }


def cmd_geodesics(cfg, metric, q, out, args):
    census = geodesics.closure_census(metric, n=cfg.geodesics.n, seed=args.seed)
    out.table("closure.csv", ["index", "chart", "u1", "u2", "residual", "hamiltonian_drift"],
              [(i, s.chart, s.u1, s.u2, r, h) for i, (s, r, h) in
               enumerate(zip(census.starts, census.residuals, census.hamiltonian_drift))])
    body = {
        "closure": {"n": cfg.geodesics.n, "seed": args.seed, "max_residual": census.max_residual,
                    "tolerance": geodesics.CLOSURE_TOL, "certified": census.certified()},
    }
    if census.certified():
        start = census.starts[0]
        samples = geodesics.zelditch_sigma(metric, start, n_samples=cfg.geodesics.sigma_samples)
        out.table("sigma.csv", ["r", "sigma", "K", "K_nu", "bracket"],
                  zip(samples.r, samples.sigma, samples.curvature, samples.normal_derivative, samples.bracket))
        body["sigma"] = {"start": [start.chart, start.u1, start.u2, start.p1, start.p2],
                         "mean": float(np.mean(samples.sigma[:-1])),
                         "max_abs": float(np.max(np.abs(samples.sigma)))}
    else:
        body["sigma"] = None
    return body


def cmd_spectrum(cfg, metric, q, out, args):
    spectrum, text, hit, key = _spectrum(cfg, metric, q, args.cache_dir)
    out.text("eigenvalues.txt", text)
    stats = spectra.cluster_statistics(spectrum)
    out.table("clusters.csv", ["k", "sum_shift", "mean_shift", "sum_sq_shift"],
              zip(stats.k, stats.sum_shift, stats.mean_shift, stats.sum_sq_shift))
    return {"cache": {"key": key, "hit": hit}, "k_max_reliable": spectrum.k_max_reliable,
            "n_eigenvalues": int(spectrum.flat().size)}


def _heat(cfg, metric, q, args):
    """Theta series, fits, zeta targets and fit warnings for F, L and, with a potential, M."""
    bare = dataclasses.replace(cfg, potential=PotentialConfig())
    lam, _, _, _ = _spectrum(bare, metric, None, args.cache_dir)
    series = {"F": traces.ThetaSeries.round_sphere(), "L": traces.ThetaSeries(lam, "L")}
    zl = geometry.zeta_values(metric, None)
    targets = {"F": geometry.ROUND_F.as_tuple(), "L": (1.0, zl.zeta0, -zl.zeta1)}
    if q is not None:
        mu, _, _, _ = _spectrum(cfg, metric, q, args.cache_dir)
        series["M"] = traces.ThetaSeries(mu, "M")
        zm = geometry.zeta_values(metric, q, curv=zl.parts)
        targets["M"] = (1.0, zm.zeta0, -zm.zeta1)
    grid = None if cfg.trace.heat_t_grid is None else np.asarray(cfg.trace.heat_t_grid, dtype=float)
    fits = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", traces.AsymptoteMismatchWarning)
        for name, s in series.items():
            fits[name] = traces.fit_heat_coefficients(s, grid)
    return series, fits, targets, [str(w.message) for w in caught]


def cmd_heat_fit(cfg, metric, q, out, args):
    series, fits, targets, caught = _heat(cfg, metric, q, args)
    rows = []
    for name, fit in fits.items():
        for t in fit.t_grid:
            rows.append((name, t, series[name](t)))
    out.table("theta.csv", ["series", "t", "theta"], rows)
    body = {}
    for name, fit in fits.items():
        c = fit.coefficients.as_tuple()
        body[name] = {"fit": c, "zeta": targets[name],
                      "difference": [a - b for a, b in zip(c, targets[name])],
                      "residual": fit.residual_norm, "t_range": [fit.t_grid[0], fit.t_grid[-1]]}
    body["warnings"] = caught
    return body


def cmd_trace_verify(cfg, metric, q, out, args):
    t = cfg.trace
    tc = traces.TraceConfig(
        L_max=cfg.solver.L_max,
        abel_t_grid=None if t.abel_t_grid is None else tuple(t.abel_t_grid),
        abel_model=t.abel_model,
        partial_fraction=t.partial_fraction,
        liouville=tuple(int(v) for v in t.liouville),
        extra_basis=cfg.solver.extra_basis,
        fit_heat=t.fit_heat,
        heat_t_grid=None if t.heat_t_grid is None else tuple(t.heat_t_grid),
    )
    report = traces.verify_trace(metric, q, tc)
    ps, ab = report.lhs_partial_sums, report.lhs_abel
    out.table("partial_sums.csv", ["K", "S_K", "per_cluster_deficit"], zip(ps["K"], ps["S_K"], ps["deficits"]))
    out.table("abel.csv", ["t", "G_t"], zip(ab["t"], ab["G_t"]))
    out.table("rhs.csv", ["term", "value"], [(k, report.rhs_terms[k]) for k in traces.RHS_TERMS])
    body = report.to_dict()
    scale = abs(report.rhs_value) if cfg.check.relative else 1.0
    measure = report.discrepancy / scale if scale > 0 else report.discrepancy
    body["check"] = {"measure": measure, "threshold": cfg.check.discrepancy,
                     "relative": cfg.check.relative, "passed": bool(measure <= cfg.check.discrepancy)}
    return body


def cmd_oracle(cfg, metric, q, out, args):
    if not metric.is_round:
        raise InvalidArgument("oracle constants are defined for the round sphere only")
    if q is None:
        raise InvalidArgument("oracle needs a potential")
    sf = traces.sf_constants(q)
    rhs = traces.theorem_rhs(metric, q, tuple(int(v) for v in cfg.trace.liouville))
    out.table("rhs.csv", ["term", "value"], [(k, rhs.terms[k]) for k in traces.RHS_TERMS])
    return {"c0": sf.c0, "c1": sf.c1, "two_c1": 2 * sf.c1,
            "kernel_integral": {"funk_hecke": sf.integral_spectral, "direct": sf.integral_direct,
                                "relative_agreement": sf.relative_agreement},
            "rhs_value": rhs.value, "rhs_minus_two_c1": rhs.value - 2 * sf.c1}


HANDLERS = {
    "curvature": cmd_curvature,
    "geodesics": cmd_geodesics,
    "spectrum": cmd_spectrum,
    "heat-fit": cmd_heat_fit,
    "trace-verify": cmd_trace_verify,
    "oracle": cmd_oracle,
}


# ------------------------------------------------------------------ entry


def run(command, cfg, out_dir=None, check=False, seed=0, cache_dir=None):
    """Run ``command`` and write its artifacts; returns (exit code, report dict)."""
    if command not in HANDLERS:
        raise InvalidArgument(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    args = argparse.Namespace(seed=seed, cache_dir=cache_dir or cfg.output.cache_dir)
    out = Artifacts(out_dir or cfg.output.dir)
    metric = cfg.build_metric()
    q = cfg.build_potential()
    if q is not None and q.is_zero:
        q = None
    body = HANDLERS[command](cfg, metric, q, out, args)
    text = render_report(command, cfg, body)
    out.text("report.json", text)
    code = EXIT_OK
    if check and command == "trace-verify" and not body["check"]["passed"]:
        code = EXIT_THRESHOLD
    return code, json.loads(text)


def build_parser():
    p = argparse.ArgumentParser(prog="spectral-trace-lab", description="Regularized trace experiments on the sphere.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML experiment file (defaults apply when omitted)")
    p.add_argument("--check", action="store_true", help="exit 3 when the trace discrepancy exceeds [check].discrepancy")
    p.add_argument("--out", help="output directory (overrides [output].dir)")
    p.add_argument("--threads", type=int, default=None, help="worker threads for compiled kernels")
    p.add_argument("--seed", type=int, default=0, help="seed for random geodesic starts")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.threads is not None:
            if args.threads < 1:
                raise InvalidArgument("--threads must be positive")
            _backend.set_threads(args.threads)
        code, report = run(args.command, cfg, args.out, args.check, args.seed)
    except InvalidArgument as exc:
        print(f"error [validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except STLabError as exc:
        print(f"error [stage: {exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error [stage: numerics]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if code == EXIT_THRESHOLD:
        chk = report["result"]["check"]
        print(f"check failed: discrepancy {chk['measure']:.3e} exceeds {chk['threshold']:.3e}", file=sys.stderr)
    out_dir = args.out or cfg.output.dir
    print(f"{args.command}: wrote {os.path.join(out_dir, 'report.json')}")
    return code


if __name__ == "__main__":
    sys.exit(main())
