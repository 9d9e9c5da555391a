"""Borel-Laplace summation of order ``p``.

The Borel transform ``b_m = h_{m+1} / Gamma(1 + m/p)`` is continued along a
ray either by a robust Pade approximant or by a closed-form handle, then
``H_theta(z) = int_{d_theta} exp(-t^p/z^p) B(t) p t^(p-1) / z^(p-1) dt`` is
computed after the substitution ``u = t^p`` with tanh-sinh quadrature.
"""

from __future__ import annotations

import cmath
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .odesys import (OdeSystem, DirectionEntry, SingularDirectionTable, eigenvalues,
                     formal_solution, linear_part, singular_directions)
from .quadrature import tanh_sinh
from .series import SeriesVec, TruncatedSeries, is_exact, log_abs

EPS_DIR = 0.01
POLE_GUARD = 0.05
KERNEL_CUTOFF = math.log(1e18)
DEFAULT_BOREL_ORDER = 48


class ResumError(ValueError):
    pass


class NonzeroConstantTerm(ResumError):
    pass


class TooFewCoefficients(ResumError):
    pass


class DegenerateTable(ResumError):
    pass


class PoleOnRay(ResumError):
    pass


class NonDecayingIntegrand(ResumError):
    pass


class OutOfSector(ResumError):
    pass


# ----------------------------------------------------------- Borel series


@dataclass(frozen=True)
class BorelSeries:
    coeffs: tuple
    p: int

    def __len__(self):
        return len(self.coeffs)

    def __call__(self, t):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * t + complex(c)
        return acc

    def as_complex(self) -> np.ndarray:
        return np.array([complex(c) for c in self.coeffs])


def _gamma_ratio(h, m: int, p: int):
    """``h / Gamma(1 + m/p)``, exact when ``m/p`` is an integer."""
    if not h:
        return Fraction(0) if is_exact(h) else 0j
    if m % p == 0:
        g = math.factorial(m // p)
        if is_exact(h):
            return h / g
        return complex(h) / float(g) if g < 1e300 else complex(h) * math.exp(-math.lgamma(1 + m // p))
    lg = math.lgamma(1.0 + m / p)
    if is_exact(h):
        mag = math.exp(log_abs(h) - lg)
        ph = cmath.phase(complex(h)) if abs(complex(h)) not in (0.0, math.inf) else _exact_phase(h)
        return cmath.rect(mag, ph)
    return complex(h) * math.exp(-lg)


def _exact_phase(h) -> float:
    re = getattr(h, "real", h)
    im = getattr(h, "imag", 0)
    # scale to a safe range before converting
    scale = max(abs(Fraction(re)), abs(Fraction(im)))
    return math.atan2(float(Fraction(im) / scale), float(Fraction(re) / scale))


def borel_transform(hv: SeriesVec | TruncatedSeries, p: int) -> list:
    """Componentwise formal Borel transform of order ``p``."""
    comps = [hv] if isinstance(hv, TruncatedSeries) else list(hv)
    out = []
    for h in comps:
        if h[0]:
            raise NonzeroConstantTerm("Borel transform needs a series without constant term")
        out.append(BorelSeries(tuple(_gamma_ratio(h[m + 1], m, p) for m in range(h.order)), p))
    return out


# ---------------------------------------------------------- Gevrey order


@dataclass(frozen=True)
class GevreyEstimate:
    kappa: float
    n_min: int
    n_max: int
    residual: float
    log_a: float = 0.0
    count: int = 0


def gevrey_estimate(phi, n_min: int | None = None, n_max: int | None = None,
                    min_count: int = 20) -> GevreyEstimate:
    """Fit ``log|c_n| = kappa n log n + n log A + const`` on nonzero terms."""
    coeffs = list(phi.coeffs if isinstance(phi, TruncatedSeries) else phi)
    n_top = len(coeffs) - 1
    if n_max is None:
        n_max = n_top
    if n_min is None:
        n_min = max(1, n_top // 4)
    ns, ys = [], []
    for n in range(max(n_min, 1), min(n_max, n_top) + 1):
        c = coeffs[n]
        if c and (is_exact(c) or abs(complex(c)) > 0):
            ns.append(n)
            ys.append(log_abs(c))
    if len(ns) < min_count:
        raise TooFewCoefficients(f"{len(ns)} nonzero coefficients in window, need {min_count}")
    n = np.array(ns, dtype=float)
    design = np.column_stack([n * np.log(n), n, np.ones_like(n)])
    sol, *_ = np.linalg.lstsq(design, np.array(ys), rcond=None)
    res = float(np.sqrt(np.mean((design @ sol - ys) ** 2)))
    return GevreyEstimate(float(sol[0]), ns[0], ns[-1], res, float(sol[1]), len(ns))


# ------------------------------------------------------------------ Pade


@dataclass(frozen=True)
class RationalApproximant:
    """``num(t) / den(t)`` with coefficients lowest degree first, ``den[0] = 1``."""

    num: tuple
    den: tuple
    poles: tuple = ()
    residues: tuple = ()

    @property
    def degrees(self):
        return len(self.num) - 1, len(self.den) - 1

    def __call__(self, t):
        return np.polyval(self.num[::-1], t) / np.polyval(self.den[::-1], t)

    def taylor(self, n: int) -> np.ndarray:
        """First ``n`` Taylor coefficients of the approximant."""
        out = np.zeros(n, dtype=complex)
        num = np.zeros(n, dtype=complex)
        k = min(n, len(self.num))
        num[:k] = self.num[:k]
        for i in range(n):
            s = num[i]
            for j in range(1, min(i, len(self.den) - 1) + 1):
                s -= self.den[j] * out[i - j]
            out[i] = s
        return out


def pade(b, L: int, M: int, tol: float = 1e-13) -> RationalApproximant:
    """Robust ``[L/M]`` Pade approximant (SVD rank reduction).

    Rank-deficient Toeplitz systems lower ``M`` (and ``L`` alike) until the
    denominator is determined; spurious pole/zero pairs are thereby avoided.
    """
    c = np.array([complex(v) for v in (b.coeffs if isinstance(b, BorelSeries) else b)])
    if L + M + 1 > len(c):
        raise ResumError(f"[{L}/{M}] needs {L + M + 1} coefficients, have {len(c)}")
    c = c[: L + M + 1]
    if not np.all(np.isfinite(c)):
        raise DegenerateTable("Pade table of non-finite coefficients")
    if not np.any(c):
        return RationalApproximant((0j,), (1 + 0j,))
    # rescale t so the coefficients neither grow nor decay on average
    mags = np.abs(c)
    nz = np.nonzero(mags > 1e-300 * np.max(mags))[0]
    scale = 1.0
    if len(nz) >= 2 and nz[-1] > nz[0]:
        log_ratio = math.log(mags[nz[-1]]) - math.log(mags[nz[0]])
        scale = math.exp(-log_ratio / (nz[-1] - nz[0]))
        # keep the rescaled coefficients inside double range
        scale = min(max(scale, 1e-4), 1e4)
    best = None
    # the trend scale can stretch a well-posed table into a badly conditioned one;
    # the unscaled table is the fallback, chosen by backward error in t itself
    for s in dict.fromkeys((scale, 1.0)):
        a, bden, k = _pade_scaled(c, L, M, s, tol)
        num = np.zeros(k, dtype=complex)
        num[: min(k, len(a))] = a[:k]
        resid = np.max(np.abs(np.convolve(c[:k], bden)[:k] - num))
        err = resid / (np.max(np.abs(c[:k])) * np.sum(np.abs(bden)) or 1.0)
        if best is None or err < best[0]:
            best = (err, a, bden)
        if err <= 1e-12:
            break
    _, a, bden = best
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(bden))):
        raise DegenerateTable("no finite Pade approximant after rank reduction")
    poles = np.roots(bden[::-1]) if len(bden) > 1 else np.array([], dtype=complex)
    poles = sorted(poles, key=abs)
    residues = []
    dden = np.polyder(bden[::-1])
    for z in poles:
        d = np.polyval(dden, z)
        residues.append(complex(np.polyval(a[::-1], z) / d) if d != 0 else complex("inf"))
    return RationalApproximant(tuple(a), tuple(bden), tuple(complex(z) for z in poles),
                               tuple(residues))


def _pade_scaled(c: np.ndarray, L: int, M: int, scale: float, tol: float):
    """Pade solve in the variable ``t * scale``; returns coefficients in ``t`` and ``L + M + 1``."""
    cs = c * scale ** np.arange(len(c))
    tol_abs = tol * np.linalg.norm(cs)
    while True:
        if M == 0:
            a = cs[: L + 1].copy()
            bden = np.array([1.0 + 0j])
            break
        top = np.zeros((L + M + 1, M + 1), dtype=complex)
        for j in range(M + 1):
            top[j:, j] = cs[: L + M + 1 - j]
        cmat = top[L + 1:, :]
        sv = np.linalg.svd(cmat, compute_uv=False)
        rho = int(np.sum(sv > tol_abs))
        if rho < M:
            drop = M - rho
            M -= drop
            L = max(L - drop, 0)
            continue
        # solve with den[0] = 1 pinned; if that cannot satisfy the equations the
        # denominator vanishes at the origin, no [L/M] form exists and M goes lower
        sol, *_ = np.linalg.lstsq(cmat[:, 1:], -cmat[:, 0], rcond=None)
        bden = np.concatenate(([1.0 + 0j], sol))
        resid = np.linalg.norm(cmat @ bden)
        # a denominator dwarfing its unit constant term means den vanishes at the origin too
        if not np.all(np.isfinite(sol)) or np.max(np.abs(sol)) > 1e14 \
                or resid > 1e-10 * sv[0] * np.linalg.norm(bden):
            M -= 1
            continue
        a = top[: L + 1, :] @ bden
        break
    a = _trim(a, tol)
    bden = _trim(bden, tol)
    # undo the scaling t -> t * scale
    a = a * scale ** (-np.arange(len(a)))
    bden = bden * scale ** (-np.arange(len(bden)))
    return a, bden, L + M + 1


def _trim(v: np.ndarray, tol: float) -> np.ndarray:
    m = np.max(np.abs(v)) if len(v) else 0.0
    k = len(v)
    while k > 1 and abs(v[k - 1]) <= tol * m:
        k -= 1
    return v[:k]


# ------------------------------------------------------ Borel continuation


@dataclass(frozen=True)
class ExactBorel:
    """Closed-form Borel function with known singularities."""

    func: Callable
    poles: tuple = ()
    label: str = ""

    def __call__(self, t):
        return self.func(t)


def _exact_handles(name: str):
    if name == "euler":
        return [ExactBorel(lambda t: 1.0 / (1.0 - t), (1 + 0j,), "1/(1-t)")]
    if name == "odd_pump":
        r2 = 1 / math.sqrt(2)
        return [ExactBorel(lambda t: 1.0 / (1.0 - 2.0 * t * t), (r2 + 0j, -r2 + 0j), "1/(1-2t^2)")]
    if name == "convergent":
        return [ExactBorel(np.exp, (), "exp(t)")]
    return None


def borel_functions(sys: OdeSystem, order: int = DEFAULT_BOREL_ORDER,
                    continuation: str = "pade", degree: int | None = None) -> list:
    """One continuable Borel function per component.

    ``continuation`` is ``"pade"``, ``"exact"`` (closed form, bundled case
    studies only) or ``"auto"`` (exact when available).
    """
    if continuation in ("exact", "auto"):
        handles = _exact_handles(sys.name)
        if handles is not None:
            return handles
        if continuation == "exact":
            raise ResumError(f"no closed-form Borel transform bundled for {sys.name!r}")
    hv = formal_solution(sys, order, exact=True)
    out = []
    for b in borel_transform(hv, sys.p):
        n = len(b)
        m = degree if degree is not None else min(16, (n - 1) // 2)
        out.append(pade(b, m, m))
    return out


# ---------------------------------------------------------- Laplace sums


def _breakpoints(poles, theta: float, p: int, u_max: float, guard: float) -> list:
    pts = set()
    rot = cmath.exp(-1j * theta)
    for t in poles:
        if not np.isfinite(t):
            continue
        w = complex(t) * rot
        s, d = w.real, abs(w.imag)
        if s <= 0 or s ** p > u_max * 1.5:
            continue
        if d < guard * abs(t):
            raise PoleOnRay(f"Borel singularity at {t:.6g} within guard distance of ray {theta:.6g}")
        if d > s:
            continue
        pts.add(s ** p)
        step = d
        while step < s:
            for v in (s - step, s + step):
                if 0 < v and v ** p < u_max:
                    pts.add(v ** p)
            step *= 4.0
    return sorted(v for v in pts if 0 < v < u_max)


def laplace_sum(borel, p: int, theta: float, z: complex, rtol: float = 1e-14,
                guard: float = POLE_GUARD, return_error: bool = False):
    """Laplace transform of order ``p`` of ``borel`` along ``arg t = theta``."""
    z = complex(z)
    if z == 0:
        return (0j, 0.0) if return_error else 0j
    rot = cmath.exp(1j * p * theta)
    c = rot / z ** p
    if c.real <= 0:
        raise NonDecayingIntegrand(f"exp(-t^p/z^p) does not decay along theta={theta:.6g} at z={z}")
    e_th = cmath.exp(1j * theta)

    def integrand(u):
        s = u ** (1.0 / p) if p > 1 else u
        return np.exp(-c * u) * borel(e_th * s)

    u_max = KERNEL_CUTOFF / c.real
    # extend while the integrand (e.g. exponential growth of B) has not died out
    peak = max(abs(integrand(np.array([0.0]))[0]), 1e-300)
    for _ in range(8):
        tail = abs(integrand(np.array([u_max]))[0])
        if tail <= 1e-18 * peak:
            break
        u_max *= 2.0
    else:
        raise NonDecayingIntegrand("Borel function grows faster than the Laplace kernel decays")
    poles = getattr(borel, "poles", ())
    cuts = [0.0] + _breakpoints(poles, theta, p, u_max, guard) + [u_max]
    total = 0j
    err = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        v, e = tanh_sinh(integrand, a, b, rtol=rtol, atol=1e-300)
        total += v
        err += e
    pref = z ** (1 - p) * rot
    value = complex(pref * total)
    err = float(abs(pref) * err)
    return (value, err) if return_error else value


# ------------------------------------------------------------ sector sums


@dataclass
class SectorSum:
    """Sum ``H_l`` on the sector between consecutive singular directions."""

    system: OdeSystem
    index: int
    theta_lo: float
    theta_hi: float
    rho: float
    borel: list
    eps_dir: float = EPS_DIR
    guard: float = POLE_GUARD
    rtol: float = 1e-14

    @property
    def opening(self) -> float:
        return (self.theta_hi - self.theta_lo) + math.pi / self.system.p

    @property
    def mid_direction(self) -> float:
        return 0.5 * (self.theta_lo + self.theta_hi)

    def direction_for(self, z: complex) -> float:
        """Direction inside the sector closest to ``arg z``."""
        phi = cmath.phase(complex(z))
        lo, hi = self.theta_lo + self.eps_dir, self.theta_hi - self.eps_dir
        best = None
        for k in range(-2, 3):
            cand = phi + 2 * math.pi * k
            th = min(max(cand, lo), hi)
            gap = abs(th - cand)
            if best is None or gap < best[0] - 1e-15:
                best = (gap, th)
        gap, th = best
        if gap >= math.pi / (2 * self.system.p):
            raise OutOfSector(f"z={z} lies outside sector {self.index}")
        return th

    def evaluate(self, z: complex, theta: float | None = None):
        """Values and quadrature error estimates at ``z``."""
        th = self.direction_for(z) if theta is None else theta
        vals, errs = [], []
        for b in self.borel:
            v, e = laplace_sum(b, self.system.p, th, z, rtol=self.rtol, guard=self.guard,
                               return_error=True)
            vals.append(v)
            errs.append(e)
        return np.array(vals), np.array(errs)

    def __call__(self, z: complex, theta: float | None = None) -> np.ndarray:
        return self.evaluate(z, theta)[0]


@dataclass
class Resummation:
    """Shared data for all sector sums of one system."""

    system: OdeSystem
    table: SingularDirectionTable
    borel: list
    eps_dir: float = EPS_DIR
    rho: float = 0.3
    rtol: float = 1e-14
    sectors: list = field(default_factory=list)

    def sector(self, l: int) -> SectorSum:
        n = len(self.table)
        lo, hi = self.table.sector_bounds(l % n)
        return SectorSum(self.system, l % n, lo, hi, self.rho, self.borel, self.eps_dir,
                         POLE_GUARD, self.rtol)

    def lateral(self, entry: DirectionEntry, z: complex, with_errors: bool = False):
        th = entry.theta
        # the pole sits at distance ~eps_dir*|t| from the lateral rays
        guard = 0.5 * self.eps_dir
        out = []
        for side in (-1, 1):
            vals, errs = [], []
            for b in self.borel:
                v, e = laplace_sum(b, self.system.p, th + side * self.eps_dir, z,
                                   rtol=self.rtol, guard=guard, return_error=True)
                vals.append(v)
                errs.append(e)
            out.append((np.array(vals), np.array(errs)))
        if with_errors:
            return out
        return out[0][0], out[1][0]


def resummation(sys: OdeSystem, continuation: str = "pade", order: int = DEFAULT_BOREL_ORDER,
                eps_dir: float = EPS_DIR, rtol: float = 1e-14) -> Resummation:
    table = singular_directions(sys, eigenvalues(linear_part(sys)))
    return Resummation(sys, table, borel_functions(sys, order, continuation), eps_dir, rtol=rtol)


def sector_sum(sys: OdeSystem, l: int, continuation: str = "pade", **kw) -> SectorSum:
    return resummation(sys, continuation, **kw).sector(l)


def lateral_sums(sys: OdeSystem | Resummation, entry: DirectionEntry | int, z: complex,
                 continuation: str = "pade"):
    """``(H_minus(z), H_plus(z))`` along ``theta -/+ eps_dir`` around a singular ray."""
    res = sys if isinstance(sys, Resummation) else resummation(sys, continuation)
    if isinstance(entry, int):
        entry = res.table[entry]
    return res.lateral(entry, z)


def evaluate_grid(fn, zs: Sequence[complex], threads: int | None = None) -> list:
    """Evaluate ``fn`` over a grid, in parallel when ``threads != 1``."""
    if threads == 1 or len(zs) < 2:
        return [fn(z) for z in zs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, zs))


def write_resum_csv(path, zs, values, errors) -> None:
    """Rows ``z_re, z_im, component, value_re, value_im, est_error``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z_re", "z_im", "component", "value_re", "value_im", "est_error"])
        for z, vals, errs in zip(zs, values, errors):
            for j, (v, e) in enumerate(zip(vals, errs)):
                w.writerow([_f(z.real), _f(z.imag), j, _f(v.real), _f(v.imag), _f(e)])


def _f(v: float) -> str:
    return format(float(v), ".17g")
