"""Stokes jumps across singular directions and their fitted multipliers.

Orientation convention: the jump across a singular ray is always
``plus - minus`` where the plus side is the lateral sum at the larger
angle.  Under complex conjugation the roles of the sides swap, so for
real systems the multipliers at mirrored directions satisfy
``gamma' = -conj(gamma)`` in this convention.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .odesys import OdeSystem, Spectrum, eigenvalues, linear_part
from .resum import Resummation, evaluate_grid, resummation

NOISE_FLOOR_EXP = 25.0     # keep |lambda| / (p rho^p) below this
GRID_MIN, GRID_MAX, GRID_POINTS = 0.04, 0.25, 12
POWER_CANDIDATES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
MULTIPLIER_THRESHOLD = 1e-6


class StokesError(ValueError):
    pass


class FitDiverged(StokesError):
    pass


class InconsistentSamples(StokesError):
    pass


class MissingDirection(StokesError):
    pass


@dataclass(frozen=True)
class JumpSample:
    z: complex
    delta: np.ndarray
    error: float
    scale: float     # max |H| of the two lateral sums


@dataclass(frozen=True)
class DecayFit:
    rate: float      # fitted a in exp(-a |z|^-k)
    power: float     # fitted k
    alpha: float     # power of |z| in the prefactor
    const: float
    residual: float


@dataclass(frozen=True)
class Multiplier:
    gamma: complex
    coordinates: tuple
    dispersion: float


@dataclass
class StokesReport:
    direction: tuple                 # (theta, eigenvalue index j, sheet l, table index)
    samples: list
    fit: DecayFit | None
    multiplier: Multiplier | None
    genuine: bool
    noise: float
    notes: list = field(default_factory=list)

    @property
    def gamma(self) -> complex:
        return self.multiplier.gamma if self.multiplier is not None else 0j

    @property
    def rate(self) -> float:
        return self.fit.rate if self.fit is not None else float("nan")

    def to_dict(self) -> dict:
        th, j, l, idx = self.direction
        d = {
            "direction": {"theta": th, "eigenvalue_index": j, "sheet": l, "index": idx},
            "samples": [{"z": [s.z.real, s.z.imag],
                         "delta": [[complex(v).real, complex(v).imag] for v in s.delta],
                         "est_error": s.error} for s in self.samples],
            "genuine": self.genuine,
            "noise": self.noise,
            "notes": list(self.notes),
        }
        if self.fit is not None:
            d["fit"] = {"rate": self.fit.rate, "power": self.fit.power,
                        "alpha": self.fit.alpha, "alpha_rounded": round(2 * self.fit.alpha) / 2,
                        "const": self.fit.const, "residual": self.fit.residual}
        if self.multiplier is not None:
            g = self.multiplier.gamma
            d["gamma"] = [g.real, g.imag]
            d["gamma_coordinates"] = [[c.real, c.imag] for c in self.multiplier.coordinates]
            d["dispersion"] = self.multiplier.dispersion
        return d


def default_grid(theta: float, rate: float, p: int, points: int = GRID_POINTS,
                 rho_min: float = GRID_MIN, rho_max: float = GRID_MAX) -> list:
    """Geometric grid along ``arg z = theta``, clipped above the noise floor."""
    if rate > 0:
        rho_min = max(rho_min, (rate / NOISE_FLOOR_EXP) ** (1.0 / p))
    # the fit needs a factor 4 in |z|; for p > 1 this reaches further out
    rho_max = max(rho_max, 4.0 * rho_min)
    rhos = np.geomspace(rho_min, rho_max, points)
    return [complex(r * cmath.exp(1j * theta)) for r in rhos]


def stokes_jump(res: Resummation, l: int, z_grid: Sequence[complex],
                threads: int | None = None) -> list:
    """``Delta_l = H_{l+1} - H_l`` across direction ``theta_{l+1}``."""
    entry = res.table[l + 1]

    def one(z):
        (m, em), (pl, ep) = res.lateral(entry, z, with_errors=True)
        scale = float(max(np.max(np.abs(m)), np.max(np.abs(pl))))
        return JumpSample(complex(z), pl - m, float(np.max(em) + np.max(ep)), scale)

    return evaluate_grid(one, list(z_grid), threads)


def decay_rate_fit(samples, p: int | None = None,
                   candidates: Sequence[float] = POWER_CANDIDATES) -> DecayFit:
    """Least squares ``log|Delta| = c - a |z|^-k + alpha log|z|`` over ``k``."""
    pts = [(abs(s.z), float(np.linalg.norm(s.delta))) if isinstance(s, JumpSample)
           else (abs(s[0]), float(np.linalg.norm(np.atleast_1d(s[1])))) for s in samples]
    pts = [(r, v) for r, v in pts if v > 0 and r > 0]
    if len(pts) < 8:
        raise FitDiverged(f"need at least 8 nonzero samples, have {len(pts)}")
    rho = np.array([q[0] for q in pts])
    if rho.max() / rho.min() < 4.0 - 1e-9:
        raise FitDiverged("samples must span a factor of at least 4 in |z|")
    y = np.log([q[1] for q in pts])
    best = None
    for k in candidates:
        design = np.column_stack([np.ones_like(rho), -rho ** (-k), np.log(rho)])
        sol, *_ = np.linalg.lstsq(design, y, rcond=None)
        res = float(np.sqrt(np.mean((design @ sol - y) ** 2)))
        if sol[1] <= 0:
            continue
        if best is None or res < best[0]:
            best = (res, k, sol)
    if best is None:
        raise FitDiverged("no candidate power gives a decaying fit")
    res, k, sol = best
    return DecayFit(float(sol[1]), float(k), float(sol[2]), float(sol[0]), res)


def eigenvector_basis(matrix, lams: Sequence[complex]) -> np.ndarray:
    """Columns spanning ``ker(A_0 - lambda)``, largest entry scaled to 1."""
    a = np.array([[complex(v) for v in row] for row in matrix])
    cols = []
    for lam in lams:
        _, _, vh = np.linalg.svd(a - lam * np.eye(a.shape[0]))
        v = vh[-1].conj()
        k = int(np.argmax(np.round(np.abs(v), 12)))
        cols.append(v / v[k])
    return np.column_stack(cols)


def multiplier_estimate(samples, lam: complex, p: int, alpha: float,
                        basis: np.ndarray | None = None, index: int = 0) -> Multiplier:
    """Average of ``Delta(z) / (exp(-lam / (p z^p)) z^alpha)`` in the eigenbasis."""
    coords = []
    for s in samples:
        z, delta = (s.z, s.delta) if isinstance(s, JumpSample) else (complex(s[0]), np.atleast_1d(s[1]))
        norm = cmath.exp(-lam / (p * z ** p)) * z ** alpha
        v = np.asarray(delta, dtype=complex) / norm
        if basis is not None:
            v = np.linalg.solve(basis, v)
        coords.append(v)
    coords = np.array(coords)
    mean = coords.mean(axis=0)
    g = complex(mean[index])
    spread = float(np.std(coords[:, index]))
    dispersion = spread / abs(g) if abs(g) > 0 else math.inf
    if dispersion > 0.5:
        raise InconsistentSamples(f"multiplier samples disperse by {dispersion:.2%}")
    return Multiplier(g, tuple(complex(c) for c in mean), dispersion)


def stokes_report(res: Resummation, l: int, z_grid: Sequence[complex] | None = None,
                  spectrum: Spectrum | None = None, threads: int | None = None) -> StokesReport:
    """Measure the jump across ``theta_{l+1}`` and fit its exponential model."""
    sys = res.system
    spectrum = spectrum or eigenvalues(linear_part(sys))
    entry = res.table[l + 1]
    lam = spectrum.eigenvalues[entry.j]
    if z_grid is None:
        z_grid = default_grid(entry.theta, abs(lam) / sys.p, sys.p)
    samples = stokes_jump(res, l, z_grid, threads)
    noise = max(s.error + 1e-15 * s.scale for s in samples)
    direction = (entry.theta, entry.j, entry.l, entry.index)
    report = StokesReport(direction, samples, None, None, False, noise)
    basis = eigenvector_basis(spectrum.matrix, spectrum.eigenvalues)
    cond = float(np.linalg.cond(basis))
    # coordinate along the eigenvector of lambda_j; separates exponentials
    # when several eigenvalues share this direction
    coords = [complex(np.linalg.solve(basis, s.delta)[entry.j]) for s in samples]
    floors = [cond * (s.error + 1e-15 * s.scale) for s in samples]
    if max(abs(c) for c in coords) <= 1e3 * max(floors):
        report.notes.append("jump below quadrature noise floor")
        return report
    usable = [s for s, c, fl in zip(samples, coords, floors) if abs(c) > 1e3 * fl]
    picked = [(s.z, c) for s, c, fl in zip(samples, coords, floors) if abs(c) > 1e3 * fl]
    try:
        fit = decay_rate_fit(picked, sys.p)
    except FitDiverged as exc:
        report.notes.append(f"decay fit failed: {exc}")
        return report
    report.fit = fit
    try:
        report.multiplier = multiplier_estimate(usable, lam, sys.p, fit.alpha, basis, entry.j)
    except InconsistentSamples as exc:
        report.notes.append(str(exc))
        return report
    report.genuine = fit.residual < 0.1 and abs(report.multiplier.gamma) > MULTIPLIER_THRESHOLD
    return report


def all_reports(res: Resummation, threads: int | None = None) -> list:
    n = len(res.table)
    spectrum = eigenvalues(linear_part(res.system))
    return [stokes_report(res, l, spectrum=spectrum, threads=threads) for l in range(-1, n - 1)]


@dataclass(frozen=True)
class SDResult:
    ok: bool
    evidence: dict   # eigenvalue index -> witnessing table index or None

    def __bool__(self):
        return self.ok


def check_SD(reports: Sequence[StokesReport], spectrum: Spectrum,
             n_directions: int | None = None) -> SDResult:
    """Every eigenvalue needs a direction with a nonzero measured multiplier."""
    if n_directions is not None:
        seen = {r.direction[3] for r in reports}
        missing = set(range(n_directions)) - seen
        if missing:
            raise MissingDirection(f"no report for directions {sorted(missing)}")
    evidence = {}
    for j in range(spectrum.r):
        witness = None
        for r in reports:
            if r.direction[1] == j and r.genuine and abs(r.gamma) > MULTIPLIER_THRESHOLD:
                witness = r.direction[3]
                break
        evidence[j] = witness
    return SDResult(all(v is not None for v in evidence.values()), evidence)


def conjugate_pair_error(a: StokesReport, b: StokesReport) -> float:
    """Relative mismatch between ``gamma_b`` and the mirror image of ``gamma_a``.

    Mirroring conjugates and flips the crossing orientation, hence the sign.
    """
    ga, gb = a.gamma, b.gamma
    if ga == 0:
        return math.inf
    return abs(gb - (-ga.conjugate())) / abs(ga)


def reports_to_json(reports: Sequence[StokesReport], sd: SDResult | None = None) -> dict:
    d = {"reports": [r.to_dict() for r in reports]}
    if sd is not None:
        d["sd"] = {"ok": sd.ok, "evidence": {str(k): v for k, v in sd.evidence.items()}}
    return d


def reports_csv_rows(reports: Sequence[StokesReport]) -> list:
    rows = [["index", "theta", "eigenvalue_index", "rate", "power", "alpha",
             "gamma_re", "gamma_im", "genuine"]]
    for r in reports:
        th, j, l, idx = r.direction
        g = r.gamma
        rows.append([idx, th, j, r.rate, r.fit.power if r.fit else float("nan"),
                     r.fit.alpha if r.fit else float("nan"), g.real, g.imag, r.genuine])
    return rows


def dumps(reports, sd=None) -> str:
    return json.dumps(reports_to_json(reports, sd), indent=2)
