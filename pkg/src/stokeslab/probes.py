"""Formal and numeric probes of ``f(x, {T_k H_j(P_l(x))})``.

A probe spec holds a polynomial ``f`` in ``(x, z_{1,1} .. z_{r,n})`` with
``f(0) = 0``, polynomials ``P_1 .. P_n`` of positive valuation and a tail
level ``k``.  Variable ``z_{j,l}`` stands for ``T_k H_j(P_l(x))`` and sits at
position ``1 + (l - 1) r + (j - 1)`` in the exponent tuple, so the
components belonging to one polynomial are contiguous.

The formal probe composes with the formal solution and reports the first
nonvanishing order.  The numeric probe evaluates the same expression on a
trajectory.  Neither decides anything; they collect evidence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (FitDiverged, Trajectory, TrajectoryPair, exp_order_fit,
                       zero_count)
from .multiseries import MultiSeries, group_degree_mask
from .odesys import OdeSystem, formal_flow, formal_solution
from .polynomial import Poly
from .series import (SeriesVec, TruncatedSeries, compose, jet, tail, to_exact,
                     valuation)

WORKING_ORDER = 48
RELIABILITY = 100.0   # samples need |phi| above this many rounding units
SMALL_SIGNAL = 1e-3


class ProbeError(ValueError):
    pass


class InvalidSpec(ProbeError):
    pass


class DegreeBoundViolated(InvalidSpec):
    pass


class DuplicatePolynomials(InvalidSpec):
    pass


class NonpositiveLeading(InvalidSpec):
    pass


class InsufficientOrder(ProbeError):
    pass


class RangeExceeded(ProbeError):
    pass


def _poly_series(coeffs: Sequence, order: int) -> TruncatedSeries:
    c = [to_exact(v) for v in coeffs][: order + 1]
    return TruncatedSeries(c + [0] * (order + 1 - len(c)), order)


@dataclass(frozen=True)
class SimpleFunctionSpec:
    f: Poly
    polynomials: tuple    # coefficient lists, constant term first
    k: int = 0
    mode: str = "SAT"

    @property
    def n(self) -> int:
        return len(self.polynomials)

    @property
    def r(self) -> int:
        return (self.f.nvars - 1) // max(self.n, 1)

    def variable(self, j: int, l: int) -> int:
        """Exponent position of ``z_{j,l}`` (zero based ``j`` and ``l``)."""
        return 1 + l * self.r + j

    def valuations(self) -> list:
        out = []
        for c in self.polynomials:
            nz = [i for i, v in enumerate(c) if v]
            out.append(nz[0] if nz else math.inf)
        return out

    def degrees(self) -> list:
        return [max((i for i, v in enumerate(c) if v), default=-1) for c in self.polynomials]

    def to_dict(self) -> dict:
        terms = []
        for e, c in sorted(self.f.terms.items()):
            cc = complex(c)
            terms.append({"x_exp": e[0], "z_exps": list(e[1:]), "coeff": [cc.real, cc.imag]})
        polys = [[complex(v).real for v in p] for p in self.polynomials]
        return {"f_terms": terms, "polynomials": polys, "k": self.k, "mode": self.mode,
                "r": self.r}

    @classmethod
    def from_dict(cls, d: dict) -> "SimpleFunctionSpec":
        polys = tuple(tuple(to_exact(v) for v in p) for p in d["polynomials"])
        mode = d.get("mode", "SAT")
        if mode not in ("SAT", "SQA"):
            raise InvalidSpec(f"unknown mode {mode!r}")
        terms = {}
        nv = None
        for t in d["f_terms"]:
            e = (int(t.get("x_exp", 0)),) + tuple(int(v) for v in t["z_exps"])
            nv = len(e) if nv is None else nv
            if len(e) != nv:
                raise InvalidSpec("f terms disagree on the number of variables")
            re, im = (t["coeff"] + [0])[:2] if isinstance(t["coeff"], list) else (t["coeff"], 0)
            c = to_exact(re) if not im else complex(re, im)
            terms[e] = terms.get(e, 0) + c
        if nv is None:
            nv = 1 + int(d.get("r", 1)) * len(polys)
        return cls(Poly(nv, terms), polys, int(d.get("k", 0)), mode)

    @classmethod
    def load(cls, path) -> "SimpleFunctionSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def validate_spec(spec: SimpleFunctionSpec, p: int, mode: str | None = None,
                  r: int | None = None) -> SimpleFunctionSpec:
    mode = mode or spec.mode
    if spec.n == 0:
        raise InvalidSpec("need at least one polynomial")
    if spec.k < 0:
        raise InvalidSpec("tail level k must be nonnegative")
    if (spec.f.nvars - 1) % spec.n:
        raise InvalidSpec("f must have 1 + r n variables")
    if r is not None and spec.r != r:
        raise InvalidSpec(f"f is written for r = {spec.r}, system has r = {r}")
    if spec.f.coeff((0,) * spec.f.nvars):
        raise InvalidSpec("f(0) must vanish")
    vals = spec.valuations()
    for c, v in zip(spec.polynomials, vals):
        if v == math.inf or v == 0:
            raise InvalidSpec("every polynomial needs positive valuation")
        lead = complex(c[v])
        if lead.imag != 0 or lead.real <= 0:
            raise NonpositiveLeading(f"leading coefficient {c[v]} is not positive")
    if mode == "SAT":
        for c, v, d in zip(spec.polynomials, vals, spec.degrees()):
            if d >= (p + 1) * v:
                raise DegreeBoundViolated(f"degree {d} is not below {(p + 1) * v}")
        canon = [tuple(c[: d + 1]) for c, d in zip(spec.polynomials, spec.degrees())]
        if len(set(canon)) != len(canon):
            raise DuplicatePolynomials("polynomials must be pairwise distinct")
    return spec


# ------------------------------------------------------------------ formal


@dataclass(frozen=True)
class SatResult:
    vanishes: bool
    first_nonzero_order: int | None
    coefficient: object
    order: int
    series: TruncatedSeries

    def to_dict(self) -> dict:
        c = None if self.coefficient is None else complex(self.coefficient)
        return {"vanishes_to_order_N": self.vanishes, "order": self.order,
                "first_nonzero_order": self.first_nonzero_order,
                "coefficient": None if c is None else [c.real, c.imag]}


def composed_series(spec: SimpleFunctionSpec, hv: SeriesVec, order: int) -> TruncatedSeries:
    """``f(x, {T_k H_j(P_l(x))})`` truncated at ``order``."""
    if hv.order < order + spec.k:
        raise InsufficientOrder(f"need the formal solution to order {order + spec.k}, have {hv.order}")
    tails = [tail(c, spec.k) for c in hv]
    args = [TruncatedSeries.monomial(1, order)]
    for coeffs in spec.polynomials:
        ps = _poly_series(coeffs, order)
        for j in range(hv.r):
            args.append(compose(tails[j].truncate(order), ps))
    return spec.f.compose_series(args, order)


def sat_probe(spec: SimpleFunctionSpec, sys: OdeSystem, order: int = WORKING_ORDER,
              hv: SeriesVec | None = None, validate: bool = True) -> SatResult:
    """Report whether the composed series vanishes through ``order``."""
    if validate:
        validate_spec(spec, sys.p, "SAT", sys.r)
    if hv is None:
        hv = formal_solution(sys, order + spec.k, exact=True)
    s = composed_series(spec, hv, order)
    v = valuation(s)
    if isinstance(v, int) and v <= order and s[v]:
        return SatResult(False, int(v), s[v], order, s)
    return SatResult(True, None, None, order, s)


# ---------------------------------------------------------- normalization


@dataclass
class NormalizedSpec:
    """Reduced polynomials ``Q`` and ``f~`` as a series in ``(x, W)``.

    ``W`` has one variable per component and reduced polynomial, ordered like
    the ``z`` variables of the original spec.
    """

    original: SimpleFunctionSpec
    reduced: tuple            # coefficient lists of the distinct Q
    index: tuple              # original polynomial -> reduced position
    units: tuple              # u_l = (P_l - Q_l) / Q_l^(p+1) as series
    f_tilde: MultiSeries
    order: int

    def compose(self, hv: SeriesVec) -> np.ndarray:
        """``f~(x, {T_k H_j(Q)})`` as complex coefficients through ``order``."""
        n = self.order
        shape = (n + 1,)
        k = self.original.k
        targets = [MultiSeries.var(0, shape)]
        for q in self.reduced:
            qs = _poly_series(q, n)
            for comp in hv:
                t = compose(tail(comp, k).truncate(n), qs)
                targets.append(MultiSeries(np.array([complex(c) for c in t.coeffs])))
        return self.f_tilde.substitute(targets).data


def reduce_polynomial(coeffs: Sequence, p: int) -> tuple:
    """``Q = J_{(p+1) nu - 1} P``."""
    nu = next(i for i, v in enumerate(coeffs) if v)
    top = (p + 1) * nu - 1
    q = list(coeffs[: top + 1])
    while q and not q[-1]:
        q.pop()
    return tuple(q)


def normalize_polynomials(spec: SimpleFunctionSpec, sys: OdeSystem, order: int = 12,
                          flow_orders: tuple | None = None) -> NormalizedSpec:
    """Rewrite the spec over reduced polynomials using the formal flow.

    With ``P = Q + Q^(p+1) u`` the flow identity gives
    ``H(P) = B(u, Q, H(Q))``; substituting ``H(Q) = J_k H(Q) + Q^k W`` and
    dividing by ``P^k`` expresses each ``T_k H(P)`` through ``W``.
    """
    validate_spec(spec, sys.p, "SQA", sys.r)
    p, r, k, n = sys.p, sys.r, spec.k, order
    reduced, index = [], []
    for c in spec.polynomials:
        q = reduce_polynomial(c, p)
        if q not in reduced:
            reduced.append(q)
        index.append(reduced.index(q))
    m = r * len(reduced)
    hv = formal_solution(sys, n + k + 1, exact=True)
    # numerator is computed kν orders deeper, then divided by P^k
    shifts = [k * spec.valuations()[i] for i in range(spec.n)]
    depth = n + max(shifts)
    shape = (depth + 1,) + (n + 1,) * m
    mask = group_degree_mask(shape, [(tuple(range(1, 1 + m)), n), (tuple(range(0, 1 + m)), depth)])
    if flow_orders is None:
        flow_orders = (30, depth, depth)
    flow = formal_flow(sys, flow_orders)

    def uni(series_coeffs):
        return MultiSeries.from_univariate([complex(v) for v in series_coeffs], 0, shape, mask)

    x = MultiSeries.var(0, shape, mask)
    zvars = [None] * (r * spec.n)
    units = []
    for l, coeffs in enumerate(spec.polynomials):
        qi = index[l]
        q = _poly_series(reduced[qi], depth)
        ps = _poly_series(coeffs, depth)
        nu = spec.valuations()[l]
        # u = (P - Q) / Q^(p+1), a power series since val(P - Q) >= (p+1) nu
        deep = depth + (p + 1) * nu
        diff = (_poly_series(coeffs, deep) - _poly_series(reduced[qi], deep)).shift_down((p + 1) * nu)
        u = diff / (_poly_series(reduced[qi], deep).shift_down(nu) ** (p + 1)).truncate(depth)
        units.append(u)
        wl = []
        for j in range(r):
            jq = compose(jet(hv[j], k), q)
            qk = q ** k
            wl.append(uni(jq.coeffs) + uni(qk.coeffs) * MultiSeries.var(1 + qi * r + j, shape, mask))
        targets = [uni(list(u.coeffs) + [0] * (depth + 1 - len(u.coeffs))), uni(q.coeffs)] + wl
        # P^k = x^(k nu) * unit
        pk_unit = (ps.shift_down(nu) ** k).truncate(n) if k else TruncatedSeries.constant(1, n)
        inv = pk_unit.reciprocal()
        for j in range(r):
            bval = flow.components[j].substitute(targets)
            num = bval - uni(compose(jet(hv[j], k), ps).coeffs)
            shifted = np.zeros(shape, dtype=complex)
            s = shifts[l]
            shifted[: depth + 1 - s] = num.data[s:]
            piece = MultiSeries(shifted, mask) * uni(inv.coeffs)
            zvars[l * r + j] = piece
    # evaluate f over (x, z) with the new pieces
    total = MultiSeries.zeros(shape, mask)
    for e, c in spec.f.terms.items():
        t = MultiSeries.const(complex(c), shape, mask)
        if e[0]:
            t = t * x ** e[0]
        for i, b in enumerate(e[1:]):
            if b:
                t = t * zvars[i] ** b
        total = total + t
    # drop the extra depth in x
    keep = np.indices(shape)[0] <= n
    f_tilde = MultiSeries(np.where(keep, total.data, 0), mask & keep)
    return NormalizedSpec(spec, tuple(reduced), tuple(index), tuple(units), f_tilde, n)


# ----------------------------------------------------------------- numeric


@dataclass
class SqaResult:
    xs: np.ndarray
    samples: np.ndarray
    reliable: np.ndarray
    noise: np.ndarray
    zero_count: int
    fit: tuple | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        s = self.samples
        return {"x": self.xs.tolist(), "phi_re": np.real(s).tolist(), "phi_im": np.imag(s).tolist(),
                "reliable": self.reliable.tolist(), "noise": self.noise.tolist(),
                "zero_count": self.zero_count,
                "exp_order_fit": None if self.fit is None else {"a": self.fit[0], "k": self.fit[1]},
                "notes": self.notes}


def _horner(coeffs: Sequence, x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + float(complex(c).real)
    return acc


def sqa_probe(spec: SimpleFunctionSpec, traj: Trajectory, hv: SeriesVec | None = None,
              xs: Sequence[float] | None = None, p: int | None = None) -> SqaResult:
    """Evaluate ``phi(x) = f(x, {T_k H_j(P_l(x))})`` on trajectory data.

    ``T_k H`` uses exact jets of the formal solution, never numerical
    derivatives.  A sample is reliable when ``|phi|`` exceeds the rounding
    level of the terms that produced it by a factor 100.
    """
    if p is not None:
        validate_spec(spec, p, "SQA", traj.r)
    k = spec.k
    if k and hv is None:
        raise ProbeError("tail level k > 0 needs the formal solution")
    lo, hi = traj.grid[-1], traj.grid[0]
    if xs is None:
        cand = traj.grid
        ok = [all(lo * (1 - 1e-12) <= _horner(c, x) <= hi * (1 + 1e-12) for c in spec.polynomials)
              for x in cand]
        xs = cand[np.array(ok, dtype=bool)] if len(cand) else cand
        if len(xs) == 0:
            raise RangeExceeded("no grid point maps every polynomial into the trajectory range")
    xs = np.asarray(xs, dtype=float)
    eps = np.finfo(float).eps
    jets = [[complex(c) for c in comp.coeffs[: k + 1]] for comp in hv] if k else None
    vals, noise = [], []
    for x in xs:
        z, zmag = [], []
        for c in spec.polynomials:
            y = _horner(c, x)
            if not (lo * (1 - 1e-12) <= y <= hi * (1 + 1e-12)) or y <= 0:
                raise RangeExceeded(f"P({x:.6g}) = {y:.6g} outside [{lo:.6g}, {hi:.6g}]")
            h = traj.at(y)
            for j in range(traj.r):
                if k:
                    jv = sum(cj * y ** i for i, cj in enumerate(jets[j]))
                    z.append((h[j] - jv) / y ** k)
                    zmag.append((abs(h[j]) + abs(jv)) / y ** k)
                else:
                    z.append(h[j])
                    zmag.append(abs(h[j]))
        phi = 0j
        scale = 0.0
        for e, c in spec.f.terms.items():
            t = complex(c) * x ** e[0]
            tm = abs(t)
            for i, b in enumerate(e[1:]):
                if b:
                    t *= z[i] ** b
                    # rounding of each factor propagates b times into the term
                    tm *= abs(z[i]) ** (b - 1) * (abs(z[i]) + b * zmag[i])
            phi += t
            scale += tm
        vals.append(phi)
        noise.append(RELIABILITY * eps * scale)
    vals = np.array(vals)
    noise = np.array(noise)
    reliable = np.abs(vals) > noise
    real = np.all(np.abs(np.imag(vals)) <= noise + 1e-300)
    result = SqaResult(xs, vals.real if real else vals, reliable, noise,
                       zero_count(np.real(vals[reliable])) if real else 0)
    if not real:
        result.notes.append("complex samples: sign changes not counted")
    if not np.any(reliable):
        result.notes.append("no sample rises above the rounding level")
    elif np.max(np.abs(vals[reliable])) < SMALL_SIGNAL:
        try:
            result.fit = exp_order_fit(xs[reliable], np.abs(vals[reliable]))
        except FitDiverged as exc:
            result.notes.append(f"exponential fit failed: {exc}")
    return result


def doubled_trajectory(pair: TrajectoryPair, sys: OdeSystem | None = None) -> Trajectory:
    """``(H(s), G(2 s))`` on the points ``s`` where the pair knows both values."""
    g = pair.first.grid
    known = {round(float(v), 15): i for i, v in enumerate(g)}
    rows, grid = [], []
    for i, s in enumerate(g):
        j = known.get(round(float(2 * s), 15))
        if j is None:
            continue
        grid.append(s)
        rows.append(np.concatenate([pair.first.values[i], pair.second.values[j]]))
    if len(grid) < 2:
        raise RangeExceeded("pair grid holds no points s with 2 s also on it")
    return Trajectory(np.array(grid), np.array(rows), pair.first.stats, pair.first.tol, sys)


def random_spec(rng: np.random.Generator, r: int, p: int, max_degree: int = 3,
                max_polys: int = 2, max_terms: int = 4, k_max: int = 2) -> SimpleFunctionSpec:
    """Random sparse nonzero ``f`` with SAT-admissible distinct polynomials."""
    n = int(rng.integers(1, max_polys + 1))
    polys: list = []
    while len(polys) < n:
        nu = int(rng.integers(1, 3))
        top = min((p + 1) * nu - 1, 3)
        c = [0] * (top + 1)
        c[nu] = int(rng.integers(1, 3))
        for i in range(nu + 1, top + 1):
            c[i] = int(rng.integers(-2, 3))
        while c and not c[-1]:
            c.pop()
        if tuple(c) not in polys:
            polys.append(tuple(c))
    nv = 1 + r * n
    terms: dict = {}
    while not terms:
        for _ in range(int(rng.integers(1, max_terms + 1))):
            e = [0] * nv
            deg = int(rng.integers(1, max_degree + 1))
            for _ in range(deg):
                e[int(rng.integers(0, nv))] += 1
            c = int(rng.choice([-2, -1, 1, 2]))
            terms[tuple(e)] = terms.get(tuple(e), 0) + c
        terms = {e: c for e, c in terms.items() if c}
    return SimpleFunctionSpec(Poly(nv, terms), tuple(polys), int(rng.integers(0, k_max + 1)), "SAT")
