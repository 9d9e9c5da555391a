"""Command line front end.

Every command writes ``report.json`` (floats with 17 significant digits),
``summary.txt`` and command specific CSV files into ``--out``.  Exit codes:
0 success, 2 invalid input, 3 numerical failure.

Option precedence: values from ``--config FILE`` (a JSON object keyed by
option name) override command line flags, which override defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import casestudies, dynamics, probes, resum, stokes
from .odesys import (BUNDLED, OdeSystem, OdeSystemError, bundled, check_distinct_arguments,
                     eigenvalues, formal_solution, linear_part, singular_directions)
from .series import GaussianFraction, SeriesError

NUMERIC_ERRORS = (dynamics.DynamicsError, dynamics.FitDiverged, stokes.FitDiverged,
                  stokes.InconsistentSamples, resum.PoleOnRay, resum.NonDecayingIntegrand,
                  resum.DegenerateTable, resum.TooFewCoefficients, probes.InsufficientOrder,
                  probes.RangeExceeded, ArithmeticError, np.linalg.LinAlgError)
VALIDATION_ERRORS = (OdeSystemError, probes.ProbeError, resum.ResumError, stokes.StokesError,
                     SeriesError, FileNotFoundError, json.JSONDecodeError, KeyError, ValueError,
                     TypeError)


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ output


def _num(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def to_json(obj, indent: int = 0) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, int, float, np.integer, np.floating, np.bool_)):
        return _num(bool(obj) if isinstance(obj, np.bool_) else obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return to_json([obj.real, obj.imag], indent)
    if isinstance(obj, (Fraction, GaussianFraction)):
        return json.dumps(str(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, bool, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(_num(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in seq) + "\n" + end + "]"
    return json.dumps(str(obj))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def write_outputs(out: Path, report: dict, summary: list, tables: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(to_json(report) + "\n")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    for stem, rows in (tables or {}).items():
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            for row in rows:
                w.writerow([_cell(v) for v in row])


# ---------------------------------------------------------------- commands


def load_system(ref: str) -> OdeSystem:
    path = Path(ref)
    if path.exists():
        return OdeSystem.load(path)
    stem = path.stem.replace("-", "_")
    if path.parent == Path(".") and stem in BUNDLED:
        return bundled(stem)
    raise FileNotFoundError(f"system file {ref!r} not found (bundled: {', '.join(BUNDLED)})")


def _c(v) -> list:
    v = complex(v)
    return [v.real, v.imag]


def _check_range(name: str, value, lo=None, hi=None):
    if value is None:
        return
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise UsageError(f"--{name.replace('_', '-')} must lie in [{lo}, {hi}], got {value}")


def cmd_solve(a):
    s = load_system(a.system)
    order = a.order or 25
    hv = formal_solution(s, order, exact=not a.float)
    rows = casestudies.coefficient_rows(hv, order)
    coeffs = [[str(c[n]) if not a.float else _c(c[n]) for c in hv] for n in range(order + 1)]
    report = {"system": s.name, "p": s.p, "r": s.r, "order": order, "exact": not a.float,
              "coefficients": coeffs}
    summary = [f"formal solution of {s.name or a.system} to order {order}"]
    for n in range(1, order + 1):
        summary.append(f"{n:4d}  " + "  ".join(str(c[n]) for c in hv))
    return report, summary, {"coefficients": rows}


def cmd_gevrey(a):
    s = load_system(a.system)
    order = a.order or 200
    hv = formal_solution(s, order, exact=True)
    out, summary = [], [f"Gevrey order estimates for {s.name or a.system} ({order} coefficients)"]
    for j, comp in enumerate(hv):
        g = resum.gevrey_estimate(comp)
        out.append({"component": j + 1, "kappa": g.kappa, "log_a": g.log_a, "residual": g.residual,
                    "window": [g.n_min, g.n_max], "count": g.count})
        summary.append(f"  component {j + 1}: kappa = {g.kappa:.6g} (expected 1/p = {1 / s.p:.6g})")
    return {"system": s.name, "p": s.p, "estimates": out}, summary, {}


def cmd_borel(a):
    s = load_system(a.system)
    order = a.order or resum.DEFAULT_BOREL_ORDER
    hv = formal_solution(s, order, exact=True)
    bs = resum.borel_transform(hv, s.p)
    comps, rows = [], [["m"] + [f"b{j + 1}_{q}" for j in range(s.r) for q in ("re", "im")]]
    summary = [f"Borel transform of order {s.p} for {s.name or a.system}"]
    for j, b in enumerate(bs):
        m = a.degree if a.degree is not None else min(16, (len(b) - 1) // 2)
        approx = resum.pade(b.coeffs, m, m)
        comps.append({"component": j + 1, "pade_degrees": list(approx.degrees),
                      "poles": [_c(p) for p in approx.poles],
                      "residues": [_c(r) for r in approx.residues]})
        summary.append(f"  component {j + 1}: Pade {approx.degrees}, poles "
                       + ", ".join(f"{complex(p):.10g}" for p in approx.poles))
    for m in range(order):
        row = [m]
        for b in bs:
            row += _c(b.coeffs[m])
        rows.append(row)
    return {"system": s.name, "p": s.p, "components": comps}, summary, {"borel": rows}


def _radial_grid(a, theta):
    lo = a.grid_min if a.grid_min is not None else stokes.GRID_MIN
    hi = a.grid_max if a.grid_max is not None else stokes.GRID_MAX
    n = a.grid_points if a.grid_points is not None else stokes.GRID_POINTS
    _check_range("grid_min", lo, 1e-6, None)
    if hi <= lo or n < 2:
        raise UsageError("need grid-min < grid-max and at least 2 grid points")
    return [complex(r * np.exp(1j * theta)) for r in np.geomspace(lo, hi, n)]


def cmd_resum(a):
    s = load_system(a.system)
    theta = a.theta if a.theta is not None else 0.0
    res = resum.resummation(s, a.continuation, rtol=a.tol or 1e-14)
    zs = _radial_grid(a, theta)
    n = len(res.table)
    sector = None
    for l in range(n):
        sec = res.sector(l)
        try:
            th = sec.direction_for(zs[0])
        except resum.OutOfSector:
            continue
        if abs(math.remainder(th - theta, 2 * math.pi)) < 1e-12:
            sector = sec
            break
    if sector is None:
        raise UsageError(f"theta = {theta} is a singular direction or lies in no sector; use 'stokes'")
    values = resum.evaluate_grid(sector.evaluate, zs, a.threads)
    rows = [["z_re", "z_im", "component", "value_re", "value_im", "est_error"]]
    pts = []
    for z, (v, e) in zip(zs, values):
        for j in range(s.r):
            rows.append([z.real, z.imag, j + 1, v[j].real, v[j].imag, float(e[j])])
        pts.append({"z": _c(z), "value": [_c(c) for c in v], "est_error": [float(x) for x in e]})
    report = {"system": s.name, "theta": theta, "sector": sector.index,
              "sector_bounds": [sector.theta_lo, sector.theta_hi], "points": pts}
    summary = [f"Borel-Laplace sum of {s.name or a.system} along arg z = {theta:.6g} (sector {sector.index})"]
    summary += [f"  |z| = {abs(z):.6g}: " + ", ".join(f"{c:.15g}" for c in v) for z, (v, _) in zip(zs, values)]
    return report, summary, {"resum": rows}


def _reports(a, s):
    res = resum.resummation(s, a.continuation)
    spectrum = eigenvalues(linear_part(s))
    n = len(res.table)
    idx = range(n) if a.direction is None else [a.direction]
    reps = []
    for i in idx:
        if not 0 <= i < n:
            raise UsageError(f"direction index must lie in 0..{n - 1}")
        grid = None
        if a.grid_min is not None or a.grid_max is not None or a.grid_points is not None:
            grid = _radial_grid(a, res.table[i].theta)
        reps.append(stokes.stokes_report(res, i - 1, grid, spectrum, a.threads))
    return res, spectrum, reps


def cmd_stokes(a):
    s = load_system(a.system)
    res, spectrum, reps = _reports(a, s)
    summary = [f"Stokes jumps for {s.name or a.system}"]
    for r in reps:
        summary.append(f"  direction {r.direction[0]:.12g} (eigenvalue {spectrum.eigenvalues[r.direction[1]]:.6g}): "
                       f"rate {r.rate:.6g}, multiplier {r.gamma:.10g}, genuine {r.genuine}")
        summary += [f"    note: {n}" for n in r.notes]
    rows = [["direction", "z_re", "z_im", "component", "delta_re", "delta_im", "est_error"]]
    for r in reps:
        for smp in r.samples:
            for j, d in enumerate(smp.delta):
                rows.append([r.direction[3], smp.z.real, smp.z.imag, j + 1, d.real, d.imag, smp.error])
    report = {"system": s.name, **stokes.reports_to_json(reps)}
    return report, summary, {"stokes": stokes.reports_csv_rows(reps), "jumps": rows}


def cmd_sd_check(a):
    s = load_system(a.system)
    a.direction = None
    res, spectrum, reps = _reports(a, s)
    sd = stokes.check_SD(reps, spectrum, len(res.table))
    da = check_distinct_arguments(spectrum)
    report = {"system": s.name, "distinct_arguments": bool(da), **stokes.reports_to_json(reps, sd)}
    summary = [f"SD check for {s.name or a.system}: {'holds' if sd.ok else 'fails'}",
               f"  eigenvalue arguments pairwise distinct: {bool(da)}"]
    for j, w in sd.evidence.items():
        summary.append(f"  eigenvalue {spectrum.eigenvalues[j]:.6g}: "
                       + (f"nonzero multiplier at direction {w}" if w is not None else "no nonzero multiplier"))
    return report, summary, {"stokes": stokes.reports_csv_rows(reps)}


def _offset(text, r):
    if text is None:
        return None
    vals = [float(v) for v in str(text).split(",")] if not isinstance(text, list) else [float(v) for v in text]
    if len(vals) != r:
        raise UsageError(f"--offset needs {r} comma separated values")
    return np.array(vals)


def cmd_trajectory(a):
    s = load_system(a.system)
    x0 = a.x_start if a.x_start is not None else 0.3
    x1 = a.x_end if a.x_end is not None else 0.02
    tol = a.tol or 1e-10
    if not 0 < x1 < x0:
        raise UsageError("need 0 < x-end < x-start")
    hv = formal_solution(s, a.order or 30)
    y0 = dynamics.seed(s, hv, x0, offset=_offset(a.offset, s.r))
    per_decade = a.grid_points or dynamics.POINTS_PER_DECADE
    traj = dynamics.integrate(s, x0, y0, x1, tol, grid=dynamics.geometric_grid(x0, x1, per_decade))
    n_max = min(8, hv.order)
    consts = dynamics.remainder_check(traj, hv, n_max, x_max=min(0.1, x0))
    report = {"system": s.name, "x_start": x0, "x_end": x1, "tol": tol, "seed": list(y0),
              "steps": traj.stats.steps, "rejected": traj.stats.rejected,
              "remainder_constants": consts}
    summary = [f"trajectory of {s.name or a.system} from x = {x0} to {x1} (tol {tol:g})",
               f"  {traj.stats.steps} steps, {traj.stats.rejected} rejected",
               "  remainder constants C_N: " + ", ".join(f"{c:.4g}" for c in consts)]
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    traj.write_csv(out / "trajectory.csv")
    return report, summary, {}


def cmd_probe(a):
    s = load_system(a.system)
    order = a.order or probes.WORKING_ORDER
    if a.random:
        rng = np.random.default_rng(a.seed if a.seed is not None else 0)
        hv = formal_solution(s, order + 2, exact=True)
        results = []
        for i in range(a.random):
            spec = probes.random_spec(rng, s.r, s.p)
            r = probes.sat_probe(spec, s, order, hv=hv)
            results.append({"spec": spec.to_dict(), **r.to_dict()})
        vanished = sum(r["vanishes_to_order_N"] for r in results)
        summary = [f"{a.random} random SAT probes on {s.name or a.system} through order {order}: "
                   f"{vanished} vanished"]
        return {"system": s.name, "seed": a.seed, "order": order, "probes": results,
                "vanished": vanished}, summary, {}
    if a.spec is None:
        raise UsageError("probe needs --spec FILE or --random N")
    spec = probes.SimpleFunctionSpec.load(a.spec)
    mode = a.mode or spec.mode
    if mode == "SAT":
        r = probes.sat_probe(spec, s, order)
        summary = [f"SAT probe on {s.name or a.system} through order {order}: "
                   + ("vanishes" if r.vanishes else f"first nonzero order {r.first_nonzero_order}, "
                                                    f"coefficient {r.coefficient}")]
        return {"system": s.name, "mode": mode, **r.to_dict()}, summary, {}
    probes.validate_spec(spec, s.p, "SQA", s.r)
    x0 = a.x_start if a.x_start is not None else 0.3
    x1 = a.x_end if a.x_end is not None else 0.02
    hv = formal_solution(s, 30)
    y0 = dynamics.seed(s, hv, x0, offset=_offset(a.offset, s.r))
    traj = dynamics.integrate(s, x0, y0, x1, a.tol or 1e-10)
    r = probes.sqa_probe(spec, traj, hv=hv)
    summary = [f"SQA probe on {s.name or a.system}: {r.zero_count} sign changes, "
               f"{int(r.reliable.sum())} of {len(r.xs)} samples above rounding level"]
    if r.fit is not None:
        summary.append(f"  exponential order fit: a = {r.fit[0]:.6g}, k = {r.fit[1]:.6g}")
    rows = [["x", "phi", "reliable"]] + [[x, float(np.real(v)), bool(ok)]
                                         for x, v, ok in zip(r.xs, r.samples, r.reliable)]
    return {"system": s.name, "mode": mode, **r.to_dict()}, summary, {"probe": rows}


def cmd_casestudy(a):
    res = casestudies.run(a.name, a.threads)
    return res.report, res.summary, res.tables


COMMANDS = {"solve": cmd_solve, "gevrey": cmd_gevrey, "borel": cmd_borel, "resum": cmd_resum,
            "stokes": cmd_stokes, "sd-check": cmd_sd_check, "trajectory": cmd_trajectory,
            "probe": cmd_probe, "casestudy": cmd_casestudy}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stokeslab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--threads", type=int, default=os.cpu_count(), help="worker threads for grids")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="JSON file whose keys override flags")
    common.add_argument("--order", type=int, default=None, help="truncation order")
    common.add_argument("--tol", type=float, default=None, help="tolerance (quadrature or integrator)")
    common.add_argument("--theta", type=float, default=None, help="direction arg z")
    common.add_argument("--grid-min", type=float, default=None)
    common.add_argument("--grid-max", type=float, default=None)
    common.add_argument("--grid-points", type=int, default=None)
    common.add_argument("--continuation", choices=("pade", "exact", "auto"), default="pade",
                        help="analytic continuation of the Borel transform")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "gevrey", "borel", "resum", "stokes", "sd-check", "trajectory", "probe"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("system", help="system JSON file or bundled name")
        if name == "solve":
            p.add_argument("--float", action="store_true", help="complex floating point instead of exact")
        if name == "borel":
            p.add_argument("--degree", type=int, default=None, help="Pade degree [m/m]")
        if name == "stokes":
            p.add_argument("--direction", type=int, default=None, help="singular direction index")
        if name in ("trajectory", "probe"):
            p.add_argument("--x-start", type=float, default=None)
            p.add_argument("--x-end", type=float, default=None)
            p.add_argument("--offset", default=None, help="seed offset, comma separated")
        if name == "probe":
            p.add_argument("--spec", default=None, help="probe spec JSON")
            p.add_argument("--mode", choices=("SAT", "SQA"), default=None)
            p.add_argument("--random", type=int, default=0, help="run N seeded random SAT probes")
    p = sub.add_parser("casestudy", parents=[common])
    p.add_argument("name", choices=casestudies.NAMES)
    return ap


def apply_config(a) -> None:
    if not a.config:
        return
    cfg = json.loads(Path(a.config).read_text())
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    for k, v in cfg.items():
        key = k.replace("-", "_")
        if key in ("command",):
            continue
        if not hasattr(a, key):
            raise UsageError(f"unknown config key {k!r}")
        setattr(a, key, v)


def validate(a) -> None:
    _check_range("order", a.order, 1, 2000)
    _check_range("tol", a.tol, 1e-16, 1e-2)
    _check_range("threads", a.threads, 1, None)
    _check_range("grid_points", a.grid_points, 2, 10000)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        apply_config(a)
        validate(a)
        report, summary, tables = COMMANDS[a.command](a)
        report = {"command": a.command, **report}
        write_outputs(Path(a.out), report, summary, tables)
        print("\n".join(summary))
        return 0
    except NUMERIC_ERRORS as exc:
        print(f"stokeslab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except VALIDATION_ERRORS as exc:
        print(f"stokeslab: invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
