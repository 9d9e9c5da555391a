"""Bundled case studies: each returns a machine report, summary lines and CSV tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import dynamics as dyn
from .odesys import (bundled, check_distinct_arguments, eigenvalues, formal_flow,
                     formal_solution, linear_part, shifted_solution, singular_directions)
from .polynomial import Poly
from .probes import SimpleFunctionSpec, doubled_trajectory, sqa_probe
from .resum import borel_transform, gevrey_estimate, pade, resummation
from .stokes import all_reports, check_SD, conjugate_pair_error, stokes_report

NAMES = ("euler", "euler2d", "euler-pair", "odd-pump", "linking", "counterexample")

# seeds of the linked pair: partial-sum seed at X0 and a fixed offset for G
PAIR_X0 = 0.6
PAIR_OFFSET = (2.0, -2.0)
WINDOW = (0.02, 0.3)


@dataclass
class CaseResult:
    name: str
    report: dict
    summary: list
    tables: dict = field(default_factory=dict)   # file stem -> rows


def _c(v: complex) -> list:
    v = complex(v)
    return [v.real, v.imag]


def coefficient_rows(hv, count: int) -> list:
    rows = [["n"] + [f"h{j + 1}_{part}" for j in range(hv.r) for part in ("re", "im")]]
    for n in range(count + 1):
        row = [n]
        for comp in hv:
            row += _c(comp[n])
        rows.append(row)
    return rows


def euler(threads: int | None = None) -> CaseResult:
    sys = bundled("euler")
    hv = formal_solution(sys, 25, exact=True)
    golden = all(hv[0][n] == math.factorial(n - 1) for n in range(1, 26))
    b = borel_transform(formal_solution(sys, 17, exact=True), 1)[0]
    approx = pade(b.coeffs, 8, 8)
    big = formal_solution(sys, 200, exact=True)
    kappa = gevrey_estimate(big[0]).kappa
    res = resummation(sys)
    rep = stokes_report(res, -1, threads=threads)
    jumps = {}
    for x in (0.05, 0.1, 0.2):
        (m, _), (pl, _) = res.lateral(res.table[0], x, with_errors=True)
        jumps[x] = complex((pl - m)[0])
    spectrum = eigenvalues(linear_part(sys))
    sd = check_SD([rep], spectrum)
    report = {
        "case": "euler",
        "coefficients_exact": golden,
        "coefficients": [str(hv[0][n]) for n in range(26)],
        "borel_all_one": all(c == 1 for c in b.coeffs),
        "pade_poles": [_c(p) for p in approx.poles],
        "gevrey_kappa": kappa,
        "jump": {str(x): {"delta": _c(d), "abs": abs(d), "expected_abs": 2 * math.pi * math.exp(-1 / x)}
                 for x, d in jumps.items()},
        "stokes": rep.to_dict(),
        "sd": sd.ok,
    }
    summary = [
        "Euler series x^2 y' = y - x",
        f"  h_n = (n-1)! exactly for n <= 25: {golden}",
        f"  Pade [8/8] pole: {approx.poles[0].real:.12g}",
        f"  Gevrey order estimate (200 terms): {kappa:.4f}",
        f"  |Delta(0.1)| = {abs(jumps[0.1]):.6e} (2 pi e^-10 = {2 * math.pi * math.exp(-10):.6e})",
        f"  multiplier {rep.gamma:.10g}, decay rate {rep.rate:.6g}",
        f"  SD holds: {sd.ok}",
    ]
    return CaseResult("euler", report, summary, {"coefficients": coefficient_rows(hv, 25)})


def _multi_direction(name: str, label: str, threads: int | None) -> CaseResult:
    sys = bundled(name)
    spectrum = eigenvalues(linear_part(sys))
    table = singular_directions(sys, spectrum)
    da = check_distinct_arguments(spectrum)
    res = resummation(sys)
    reports = all_reports(res, threads=threads)
    sd = check_SD(reports, spectrum, len(table))
    report = {
        "case": label,
        "eigenvalues": [_c(v) for v in spectrum.eigenvalues],
        "distinct_arguments": bool(da),
        "singular_directions": table.thetas,
        "stokes": [r.to_dict() for r in reports],
        "sd": sd.ok,
        "sd_evidence": {str(k): v for k, v in sd.evidence.items()},
    }
    summary = [f"{label}: eigenvalues " + ", ".join(f"{v:.6g}" for v in spectrum.eigenvalues),
               "  singular directions " + ", ".join(f"{t:.12g}" for t in table.thetas),
               f"  eigenvalue arguments pairwise distinct: {bool(da)}"]
    for r in reports:
        summary.append(f"  direction {r.direction[0]:.6g}: rate {r.rate:.6g}, multiplier {r.gamma:.8g}, "
                       f"genuine {r.genuine}")
    mirrored = len(reports) == 2 and abs(math.remainder(table.thetas[0] + table.thetas[1], 2 * math.pi)) < 1e-9 \
        and abs(table.thetas[0] - table.thetas[1]) > 1e-9
    if mirrored and sys.is_real():
        err = conjugate_pair_error(reports[0], reports[1])
        report["conjugate_pair_error"] = err
        summary.append(f"  mirrored multipliers agree to {err:.3g} relative")
    summary.append(f"  SD holds: {sd.ok}")
    return CaseResult(label, report, summary)


def euler2d(threads: int | None = None) -> CaseResult:
    out = _multi_direction("euler2d", "euler2d", threads)
    sys = bundled("euler2d")
    hv = formal_solution(sys, 20, exact=True)
    flow = formal_flow(sys, (10, 10, 10))
    lhs = flow.compose_solution(hv, 10)
    rhs = shifted_solution(hv, sys.p, 10)
    err = max(a.max_abs_diff(b) for a, b in zip(lhs, rhs))
    out.report["formal_flow_error"] = err
    out.summary.insert(-1, f"  formal flow identity through total order 10: max error {err:.3g}")
    out.tables["coefficients"] = coefficient_rows(hv, 20)
    return out


def euler_pair(threads: int | None = None) -> CaseResult:
    return _multi_direction("euler_pair", "euler-pair", threads)


def odd_pump(threads: int | None = None) -> CaseResult:
    sys = bundled("odd_pump")
    hv = formal_solution(sys, 25, exact=True)
    h = hv[0]
    golden = all(h[2 * n + 1] == 2 ** n * math.factorial(n) for n in range(13)) and \
        all(h[2 * n] == 0 for n in range(13))
    b = borel_transform(formal_solution(sys, 9, exact=True), 2)[0]
    approx = pade(b.coeffs, 4, 4)
    kappa = gevrey_estimate(formal_solution(sys, 200, exact=True)[0]).kappa
    out = _multi_direction("odd_pump", "odd-pump", threads)
    out.report.update({
        "coefficients_exact": golden,
        "borel": [str(c) for c in b.coeffs],
        "pade_poles": [_c(p) for p in approx.poles],
        "gevrey_kappa": kappa,
    })
    out.summary[1:1] = [
        f"  c_(2n+1) = 2^n n! and even terms vanish (n <= 12): {golden}",
        "  Pade [4/4] poles: " + ", ".join(f"{p.real:.12g}" for p in approx.poles),
        f"  Gevrey order estimate (200 terms): {kappa:.4f}",
    ]
    out.tables["coefficients"] = coefficient_rows(hv, 25)
    return out


def linked_pair(x_min: float = WINDOW[0], x_max: float = WINDOW[1], tol: float = 1e-10,
                extra_grid=()):
    """Two euler2d solutions with distinct seeds, the difference carried accurately."""
    sys = bundled("euler2d")
    hv = formal_solution(sys, 30)
    g = dyn.winding_grid(x_min, x_max)
    grid = set(g.tolist()) | set(float(v) for v in extra_grid)
    y1 = dyn.seed(sys, hv, PAIR_X0)
    y2 = y1 + np.array(PAIR_OFFSET)
    x_end = min(grid)
    pair = dyn.integrate_pair(sys, PAIR_X0, y1, y2, x_end, tol, grid=sorted(grid, reverse=True))
    return pair, g


def linking(threads: int | None = None) -> CaseResult:
    x_min, x_max = WINDOW
    pair, g = linked_pair(x_min, x_max)
    d = pair.difference
    keep = (d.grid >= x_min - 1e-15) & (d.grid <= x_max + 1e-15)
    v = d.values[keep]
    turns = dyn.winding(v[:, 0] + 1j * v[:, 1])
    expected = (1 / x_min - 1 / x_max) / (2 * math.pi)
    zeros = dyn.zero_count(v[:, 0])
    report = {"case": "linking", "window": [x_min, x_max], "turns": turns,
              "expected_turns": expected, "zero_count_component_1": zeros,
              "samples": int(keep.sum())}
    summary = ["Asymptotic linking of two euler2d solutions",
               f"  winding of H - G over [{x_min}, {x_max}]: {turns:.6g} turns (linear model {expected:.6g})",
               f"  sign changes of (H - G)_1: {zeros}"]
    rows = [["x", "d1", "d2"]] + [[x, a.real, b.real] for x, (a, b) in zip(d.grid[keep], v)]
    return CaseResult("linking", report, summary, {"difference": rows})


def counterexample_spec() -> SimpleFunctionSpec:
    """``f = z_{1,1} - z_{3,2}`` with ``P = (x, x/2)`` on the doubled system."""
    e11 = (0, 1) + (0,) * 7
    e32 = (0,) * 7 + (1, 0)
    return SimpleFunctionSpec(Poly(9, {e11: 1, e32: -1}), ((0, 1), (0, Fraction(1, 2))), 0, "SQA")


def counterexample(threads: int | None = None):
    x_min, x_max = WINDOW
    g = dyn.winding_grid(x_min, x_max)
    pair, _ = linked_pair(x_min / 2, 2 * x_max if 2 * x_max <= PAIR_X0 else PAIR_X0,
                          extra_grid=np.concatenate([g, g / 2, 2 * g]))
    sys = bundled("counterexample")
    traj = doubled_trajectory(pair, sys)
    spec = counterexample_spec()
    res = sqa_probe(spec, traj, xs=g, p=sys.p)
    report = {"case": "counterexample", "window": [x_min, x_max], "zero_count": res.zero_count,
              "reliable_samples": int(res.reliable.sum()), "samples": len(g),
              "probe": res.to_dict()}
    summary = ["Doubled euler2d system (H(s), G(2s)) with f = z_11 - z_32, P = (x, x/2)",
               f"  phi(x) = H_1(x) - G_1(x) changes sign {res.zero_count} times on "
               f"[{x_min}, {x_max}] ({int(res.reliable.sum())} of {len(g)} samples above rounding level)"]
    rows = [["x", "phi", "reliable"]] + [[x, float(np.real(v)), bool(ok)]
                                         for x, v, ok in zip(res.xs, res.samples, res.reliable)]
    return CaseResult("counterexample", report, summary, {"probe": rows})


RUNNERS = {"euler": euler, "euler2d": euler2d, "euler-pair": euler_pair, "odd-pump": odd_pump,
           "linking": linking, "counterexample": counterexample}


def run(name: str, threads: int | None = None) -> CaseResult:
    if name not in RUNNERS:
        raise ValueError(f"unknown case study {name!r}; choose from {', '.join(NAMES)}")
    return RUNNERS[name](threads)
