"""Systems ``x^(p+1) y' = A(x, y)`` with polynomial right-hand side.

Covers the linear part and its spectrum, the singular directions, the
unique formal solution with zero constant term, the tail systems satisfied
by ``T_k H`` and the formal flow ``B(z, x, w)`` of the rescaled equation
``dw/dz = (1 + x^p z)^(-p-1) A(x + x^(p+1) z, w)``.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .multiseries import MultiSeries, group_degree_mask
from .polynomial import Poly
from .series import SeriesVec, TruncatedSeries, to_exact

TWO_PI = 2.0 * math.pi
EIG_TOL = 1e-12
ARG_TOL = 1e-9

BUNDLED = ("euler", "euler2d", "euler_pair", "odd_pump", "convergent", "counterexample")


class OdeSystemError(ValueError):
    pass


class SingularLinearPart(OdeSystemError):
    pass


class DivisibilityFailure(OdeSystemError):
    pass


@dataclass(frozen=True)
class OdeSystem:
    """``x^(p+1) dy/dx = A(x, y)``; ``rhs[j]`` is a polynomial in ``(x, y_1..y_r)``."""

    p: int
    r: int
    rhs: tuple
    name: str = ""

    def __post_init__(self):
        if self.p < 1:
            raise OdeSystemError("Poincare rank p must be >= 1")
        if self.r < 1 or len(self.rhs) != self.r:
            raise OdeSystemError("need one right-hand side polynomial per component")
        origin = (0,) * (self.r + 1)
        for a in self.rhs:
            if a.nvars != self.r + 1:
                raise OdeSystemError("right-hand side must be a polynomial in (x, y_1..y_r)")
            if a.coeff(origin):
                raise OdeSystemError("A(0, 0) must vanish")
        object.__setattr__(self, "rhs", tuple(self.rhs))

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "OdeSystem":
        p, r = int(d["p"]), int(d["r"])
        comps: list[dict] = [{} for _ in range(r)]
        for t in d["terms"]:
            j = int(t.get("component", 0))
            if not 0 <= j < r:
                raise OdeSystemError(f"term component {j} outside 0..{r - 1}")
            ys = list(t["y_exps"])
            if len(ys) != r:
                raise OdeSystemError("y_exps must have r entries")
            e = (int(t["x_exp"]), *map(int, ys))
            re, im = t["coeff"]
            c = _parse_coeff(re, im)
            comps[j][e] = comps[j].get(e, 0) + c
        return cls(p, r, tuple(Poly(r + 1, c) for c in comps), name or d.get("name", ""))

    def to_dict(self) -> dict:
        terms = []
        for j, a in enumerate(self.rhs):
            for e, c in sorted(a.terms.items()):
                c = complex(c)
                terms.append({"component": j, "x_exp": e[0], "y_exps": list(e[1:]),
                              "coeff": [c.real, c.imag]})
        d = {"p": self.p, "r": self.r, "terms": terms}
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def load(cls, path: str | Path) -> "OdeSystem":
        path = Path(path)
        with open(path) as fh:
            d = json.load(fh)
        # a name stored in the file wins over the file name
        return cls.from_dict(d, name=d.get("name") or path.stem)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def to_exact(self) -> "OdeSystem":
        return OdeSystem(self.p, self.r, tuple(a.to_exact() for a in self.rhs), self.name)

    def to_complex(self) -> "OdeSystem":
        return OdeSystem(self.p, self.r, tuple(a.to_complex() for a in self.rhs), self.name)

    def is_real(self) -> bool:
        return all(complex(c).imag == 0 for a in self.rhs for c in a.terms.values())

    def evaluate(self, x, y: Sequence) -> np.ndarray:
        """``A(x, y)`` at numbers."""
        return np.array([complex(a(x, *y)) for a in self.rhs])

    def field(self):
        """Vectorised ``(x, y) -> A(x, y) / x^(p+1)`` with cached float terms."""
        compiled = []
        for a in self.rhs:
            exps = np.array(list(a.terms.keys()), dtype=int).reshape(-1, self.r + 1)
            coefs = np.array([complex(c) for c in a.terms.values()])
            compiled.append((exps, coefs))
        p1 = self.p + 1
        real = self.is_real()

        def f(x, y):
            out = np.empty(self.r, dtype=float if real and np.isrealobj(y) else complex)
            for j, (exps, coefs) in enumerate(compiled):
                mon = np.prod(np.power(np.concatenate(([x], y))[None, :], exps), axis=1)
                v = np.dot(coefs, mon)
                out[j] = v.real if out.dtype == float else v
            return out / x ** p1

        return f

    def jacobian_y(self, x, y) -> np.ndarray:
        """``dA/dy`` at a point."""
        return np.array([[complex(a.partial(k + 1)(x, *y)) for k in range(self.r)]
                         for a in self.rhs])


def _parse_coeff(re, im):
    # integers and exact decimals stay exact so rational mode is lossless
    if im == 0:
        return _exact_real(re)
    return complex(re, im)


def _exact_real(v):
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        return Fraction(v)
    if float(v).is_integer():
        return int(v)
    return Fraction(str(v))


def bundled(name: str) -> OdeSystem:
    """One of the bundled case-study systems (see :data:`BUNDLED`)."""
    key = name.replace("-", "_")
    if key not in BUNDLED:
        raise OdeSystemError(f"unknown bundled system {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("stokeslab.data").joinpath(f"{key}.json").read_text()
    return OdeSystem.from_dict(json.loads(text), name=key)


def bundled_path(name: str) -> Path:
    key = name.replace("-", "_")
    return Path(str(resources.files("stokeslab.data").joinpath(f"{key}.json")))


# ---------------------------------------------------------------- spectrum


def linear_part(sys: OdeSystem) -> list:
    """``A_0 = dA/dy (0, 0)`` as an ``r x r`` nested list (exact if possible)."""
    out = []
    for a in sys.rhs:
        row = []
        for k in range(sys.r):
            e = [0] * (sys.r + 1)
            e[k + 1] = 1
            row.append(a.coeff(e))
        out.append(row)
    return out


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: tuple
    matrix: tuple

    @property
    def r(self):
        return len(self.eigenvalues)


@dataclass(frozen=True)
class ArgumentCheck:
    """Outcome of the distinct-argument test; truthy when it passes."""

    ok: bool
    zero_eigenvalue: bool = False
    clashes: tuple = ()

    def __bool__(self):
        return self.ok


def characteristic_polynomial(m) -> np.ndarray:
    """Monic characteristic polynomial, highest degree first (Faddeev-LeVerrier)."""
    a = np.asarray(m, dtype=complex)
    n = a.shape[0]
    coeffs = [1.0 + 0j]
    mk = np.zeros_like(a)
    ident = np.eye(n, dtype=complex)
    for k in range(1, n + 1):
        mk = a @ mk + coeffs[-1] * ident
        ck = -np.trace(a @ mk) / k
        coeffs.append(ck)
    return np.array(coeffs)


def aberth_roots(coeffs, tol: float = EIG_TOL, max_iter: int = 500) -> np.ndarray:
    """All roots of a polynomial (highest degree first) by Aberth-Ehrlich."""
    c = np.asarray(coeffs, dtype=complex)
    c = c / c[0]
    n = len(c) - 1
    if n == 0:
        return np.array([], dtype=complex)
    if n == 1:
        return np.array([-c[1]])
    dc = np.polyder(c)
    # Cauchy-type radius bound, points on a circle with irrational offset
    radius = 1.0 + float(np.max(np.abs(c[1:])))
    z = radius * 0.5 * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    for _ in range(max_iter):
        pz = np.polyval(c, z)
        dpz = np.polyval(dc, z)
        converged = True
        w = np.empty_like(z)
        for i in range(n):
            if pz[i] == 0:
                w[i] = 0
                continue
            ratio = pz[i] / dpz[i] if dpz[i] != 0 else pz[i] * 1e-3
            diff = z[i] - np.delete(z, i)
            s = np.sum(1.0 / diff) if diff.size else 0.0
            w[i] = ratio / (1.0 - ratio * s)
        z = z - w
        scale = np.maximum(1.0, np.abs(z))
        if np.all(np.abs(w) <= tol * scale):
            break
        converged = False
    # polish simple roots with a few Newton steps
    for _ in range(3):
        d = np.polyval(dc, z)
        ok = np.abs(d) > 1e-14
        z[ok] = z[ok] - np.polyval(c, z[ok]) / d[ok]
    return z


def eigenvalues(matrix) -> Spectrum:
    m = tuple(tuple(row) for row in matrix)
    roots = aberth_roots(characteristic_polynomial([[complex(v) for v in row] for row in m]))
    roots = [complex(round_small(z.real), round_small(z.imag)) for z in roots]
    roots.sort(key=lambda z: (_arg2pi(z), abs(z)))
    return Spectrum(tuple(roots), m)


def round_small(v: float, tol: float = 1e-13) -> float:
    return 0.0 if abs(v) < tol else float(v)


def _arg2pi(z: complex) -> float:
    a = cmath.phase(z)
    return a + TWO_PI if a < 0 else a


def _angle_gap(a: float, b: float) -> float:
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


def check_distinct_arguments(spec: Spectrum, tol: float = ARG_TOL) -> ArgumentCheck:
    lam = spec.eigenvalues
    zero = any(abs(v) <= EIG_TOL * max(1.0, max(abs(u) for u in lam)) for v in lam)
    clashes = []
    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            if abs(lam[i]) == 0 or abs(lam[j]) == 0:
                continue
            if _angle_gap(cmath.phase(lam[i]), cmath.phase(lam[j])) <= tol:
                clashes.append((i, j))
    return ArgumentCheck(not zero and not clashes, zero, tuple(clashes))


@dataclass(frozen=True)
class DirectionEntry:
    theta: float
    j: int        # eigenvalue index into Spectrum.eigenvalues
    l: int        # sheet index 0..p-1
    index: int    # position in the sorted table

    @property
    def eigenvalue_label(self):
        return self.j


@dataclass(frozen=True)
class SingularDirectionTable:
    entries: tuple
    p: int
    eigenvalues: tuple = field(default=())

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> DirectionEntry:
        return self.entries[i % len(self.entries)]

    def __iter__(self):
        return iter(self.entries)

    @property
    def thetas(self) -> list:
        return [e.theta for e in self.entries]

    def sector_bounds(self, l: int) -> tuple:
        """Directions bounding sector ``l``: ``(theta_l, theta_{l+1})`` unwrapped."""
        n = len(self.entries)
        lo = self.entries[l % n].theta + TWO_PI * (l // n)
        hi_idx = l + 1
        hi = self.entries[hi_idx % n].theta + TWO_PI * (hi_idx // n)
        return lo, hi


def singular_directions(sys: OdeSystem, spec: Spectrum | None = None) -> SingularDirectionTable:
    """All ``theta in [0, 2 pi)`` with ``p theta = arg(lambda_j) mod 2 pi``."""
    if spec is None:
        spec = eigenvalues(linear_part(sys))
    raw = []
    for j, lam in enumerate(spec.eigenvalues):
        if abs(lam) == 0:
            continue
        base = _arg2pi(lam)
        for l in range(sys.p):
            th = ((base + TWO_PI * l) / sys.p) % TWO_PI
            if TWO_PI - th < 1e-15:
                th = 0.0
            raw.append((th, j, l))
    raw.sort()
    entries = tuple(DirectionEntry(th, j, l, i) for i, (th, j, l) in enumerate(raw))
    return SingularDirectionTable(entries, sys.p, spec.eigenvalues)


# --------------------------------------------------------- formal solution


def _field_inverse(m: list) -> list:
    """Gauss-Jordan inverse over whatever field the entries live in."""
    n = len(m)
    a = [list(row) + [1 if i == j else 0 for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        piv = max(range(col, n), key=lambda i: abs(complex(a[i][col])))
        if not a[piv][col] or abs(complex(a[piv][col])) < 1e-300:
            raise SingularLinearPart("linear part A_0 is not invertible")
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col] if not isinstance(a[col][col], int) else Fraction(1, a[col][col])
        a[col] = [v * inv for v in a[col]]
        for i in range(n):
            if i != col and a[i][col]:
                f = a[i][col]
                a[i] = [u - f * v for u, v in zip(a[i], a[col])]
    return [row[n:] for row in a]


def formal_solution(sys: OdeSystem, order: int, exact: bool = False) -> SeriesVec:
    """Unique ``H`` with ``H(0) = 0`` solving the system through ``x^order``.

    Order-by-order linear solves ``A_0 h_n = (n - p) h_{n-p} - R_n`` where
    ``R_n`` collects the contributions of already-known coefficients.
    Products of components are built incrementally so the cost is
    ``O(order^2)`` per monomial of ``A``.
    """
    if order < 1:
        raise OdeSystemError("order must be >= 1")
    work = sys.to_exact() if exact else sys.to_complex()
    r, p = work.r, work.p
    a0 = linear_part(work)
    try:
        a0_inv = _field_inverse(a0)
    except ZeroDivisionError as exc:
        raise SingularLinearPart("linear part A_0 is not invertible") from exc
    zero = Fraction(0) if exact else 0j

    h = [[zero] * (order + 1) for _ in range(r)]

    # monomials y^b with |b| >= 2, built as chains node(b) = node(b - e_j) * H_j
    nodes: dict = {}
    parents: dict = {}

    def need(b):
        if sum(b) < 2 or b in nodes:
            return
        j = next(i for i, v in enumerate(b) if v)
        parent = tuple(v - (i == j) for i, v in enumerate(b))
        parents[b] = (parent, j)
        need(parent)
        nodes[b] = [zero] * (order + 1)

    plan = []  # (component, x_exp, b, coeff)
    for comp, a in enumerate(work.rhs):
        for e, c in a.terms.items():
            xe, b = e[0], tuple(e[1:])
            if xe == 0 and sum(b) == 1:
                continue  # linear part, handled by A_0
            need(b)
            plan.append((comp, xe, b, c))
    node_order = sorted(nodes, key=sum)

    def node_coeff(b, m):
        if sum(b) == 0:
            return 1 if m == 0 else 0
        if sum(b) == 1:
            return h[b.index(1)][m]
        return nodes[b][m]

    for n in range(1, order + 1):
        for b in node_order:
            parent, j = parents[b]
            s = zero
            for m in range(1, n):
                pc = node_coeff(parent, m)
                if pc:
                    hj = h[j][n - m]
                    if hj:
                        s = s + pc * hj
            nodes[b][n] = s
        rhs = [zero] * r
        for comp, xe, b, c in plan:
            m = n - xe
            if m < 0:
                continue
            v = node_coeff(b, m) if sum(b) else (1 if m == 0 else 0)
            if v:
                rhs[comp] = rhs[comp] + c * v
        lhs = [(n - p) * h[j][n - p] if n - p >= 1 else zero for j in range(r)]
        diff = [lhs[j] - rhs[j] for j in range(r)]
        for j in range(r):
            s = zero
            for k in range(r):
                if a0_inv[j][k] and diff[k]:
                    s = s + a0_inv[j][k] * diff[k]
            h[j][n] = s
    if exact:
        comps = [TruncatedSeries([to_exact(v) for v in hj]) for hj in h]
    else:
        comps = [TruncatedSeries([complex(v) for v in hj]) for hj in h]
    return SeriesVec(tuple(comps))


def residual(sys: OdeSystem, hv: SeriesVec) -> SeriesVec:
    """``x^(p+1) H' - A(x, H)`` computed with plain series arithmetic."""
    n = hv.order
    x = TruncatedSeries.monomial(1, n)
    args = [x] + list(hv.components)
    out = []
    for j, a in enumerate(sys.rhs):
        h = hv[j]
        deriv = TruncatedSeries([k * h[k] for k in range(n + 1)])  # x H'
        lhs = deriv.shift_up(sys.p)
        out.append(lhs - a.compose_series(args, n))
    return SeriesVec(tuple(out))


# ----------------------------------------------------------- tail systems


def tail_system(sys: OdeSystem, k: int, hv: SeriesVec | None = None, tol: float = 1e-11) -> OdeSystem:
    """System solved by ``w = T_k H`` after ``y = J_k H + x^k w``.

    ``x^(p+1) w' = [A(x, J_k H + x^k w) - x^(p+1) (J_k H)'] / x^k - k x^p w``.
    Exact when ``sys`` and ``hv`` carry exact coefficients; in float mode
    terms below ``tol`` (relative) are treated as cancelled.
    """
    if k < 0:
        raise OdeSystemError("k must be >= 0")
    if k == 0:
        return sys
    if hv is None:
        hv = formal_solution(sys, k + 1, exact=True)
        base = sys.to_exact()
    else:
        base = sys.to_exact() if all(c.exact for c in hv) else sys.to_complex()
    if hv.order < k:
        raise OdeSystemError("formal solution known to lower order than k")
    r, p = base.r, base.p
    nv = r + 1
    x = Poly.var(nv, 0)
    jets = [Poly(nv, {(n,) + (0,) * r: hv[j][n] for n in range(1, k + 1)}) for j in range(r)]
    subs = [x] + [jets[j] + Poly(nv, {(k,) + tuple(int(i == j) for i in range(r)): 1})
                  for j in range(r)]
    new = []
    for j, a in enumerate(base.rhs):
        expr = a.substitute(subs) - jets[j].partial(0) * Poly(nv, {(p + 1,) + (0,) * r: 1})
        scale = max((abs(complex(c)) for c in expr.terms.values()), default=0.0)
        kept = {}
        for e, c in expr.terms.items():
            if e[0] < k:
                if isinstance(c, (complex, float)) and abs(c) <= tol * max(scale, 1.0):
                    continue
                raise DivisibilityFailure(
                    f"term x^{e[0]} y^{e[1:]} (coeff {c}) in component {j} is not divisible by x^{k}")
            kept[(e[0] - k,) + e[1:]] = c
        w_term = {(p,) + tuple(int(i == j) for i in range(r)): -k}
        new.append(Poly(nv, kept) + Poly(nv, w_term))
    name = f"{sys.name}_tail{k}" if sys.name else ""
    return OdeSystem(p, r, tuple(new), name)


# ------------------------------------------------------------ formal flow


@dataclass
class FormalFlow:
    """Truncated ``B(z, x, w)`` in variables ``(z, x, w_1..w_r)``."""

    components: list
    p: int
    orders: tuple

    @property
    def r(self):
        return len(self.components)

    def compose_solution(self, hv: SeriesVec, total: int) -> list:
        """``B(z, x, H(x))`` as bivariate series in ``(z, x)`` up to total degree ``total``."""
        shape = (total + 1, total + 1)
        mask = group_degree_mask(shape, [((0, 1), total)])
        zvar = MultiSeries.var(0, shape, mask)
        xvar = MultiSeries.var(1, shape, mask)
        hs = [MultiSeries.from_univariate([complex(c) for c in hv[j].coeffs], 1, shape, mask)
              for j in range(hv.r)]
        targets = [zvar, xvar] + hs
        return [b.substitute(targets) for b in self.components]


def shifted_solution(hv: SeriesVec, p: int, total: int) -> list:
    """``H(x + x^(p+1) z)`` as bivariate series in ``(z, x)``."""
    shape = (total + 1, total + 1)
    mask = group_degree_mask(shape, [((0, 1), total)])
    big_x = MultiSeries.var(1, shape, mask) + MultiSeries.monomial((1, p + 1), shape, mask)
    out = []
    for comp in hv:
        coeffs = [complex(c) for c in comp.coeffs[: total + 1]]
        uni = MultiSeries(np.array(coeffs))
        out.append(uni.substitute([big_x]))
    return out


def _poly_eval(a: Poly, values: Sequence, cache: dict):
    total = None
    for e, c in a.terms.items():
        t = None
        for i, k in enumerate(e):
            if k:
                key = (i, k)
                if key not in cache:
                    cache[key] = values[i] ** k
                t = cache[key] if t is None else t * cache[key]
        term = t * complex(c) if t is not None else complex(c)
        total = term if total is None else total + term
    return total


def formal_flow(sys: OdeSystem, orders: tuple = (8, 8, 8)) -> FormalFlow:
    """Picard iteration for ``B`` with ``B(0, x, w) = w``.

    Truncation keeps ``z^a x^b w^c`` with ``a <= N_z``, ``b <= N_x`` and
    ``|c| <= N_w``; each iteration fixes one more power of ``z``.
    """
    nz, nx, nw = orders
    r, p = sys.r, sys.p
    shape = (nz + 1, nx + 1) + (nw + 1,) * r
    mask = group_degree_mask(shape, [(tuple(range(2, 2 + r)), nw)])
    z = MultiSeries.var(0, shape, mask)
    x = MultiSeries.var(1, shape, mask)
    ws = [MultiSeries.var(2 + j, shape, mask) for j in range(r)]
    big_x = x + MultiSeries.monomial((1, p + 1) + (0,) * r, shape, mask)
    # (1 + x^p z)^(-p-1) as a binomial series
    u = MultiSeries.monomial((1, p) + (0,) * r, shape, mask)
    factor = MultiSeries.const(1.0, shape, mask)
    term = MultiSeries.const(1.0, shape, mask)
    for k in range(1, nz + 1):
        term = term * u * ((-p - 1 - (k - 1)) / k)
        factor = factor + term
    rhs = [a.to_complex() for a in sys.rhs]
    b = list(ws)
    for _ in range(nz + 1):
        cache: dict = {}
        vals = [big_x] + b
        b = [ws[j] + (factor * _poly_eval(rhs[j], vals, cache)).integrate(0) for j in range(r)]
    return FormalFlow(b, p, (nz, nx, nw))
