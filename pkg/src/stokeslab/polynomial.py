"""Sparse multivariate polynomials with complex or exact coefficients.

Exponent tuples index the variables in a fixed order, e.g. ``(x, y1, .., yr)``
for a right-hand side ``A(x, y)``.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .series import TruncatedSeries, to_exact


class Poly:
    """Immutable sparse polynomial ``{exponents: coefficient}``."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple, object] | None = None):
        self.nvars = nvars
        clean = {}
        for e, c in (terms or {}).items():
            e = tuple(int(k) for k in e)
            if len(e) != nvars or any(k < 0 for k in e):
                raise ValueError(f"bad exponent tuple {e} for {nvars} variables")
            if c:
                clean[e] = clean.get(e, 0) + c
        self.terms = {e: c for e, c in clean.items() if c}

    @classmethod
    def const(cls, nvars: int, c) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, nvars: int, i: int, c=1) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): c})

    def __repr__(self):
        return f"Poly({self.nvars}, {self.terms!r})"

    def __eq__(self, other):
        return isinstance(other, Poly) and self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def coeff(self, e) -> object:
        return self.terms.get(tuple(e), 0)

    def __add__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(self.nvars, other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.nvars, {e: c * other for e, c in self.terms.items()})
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Poly.const(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def map_coeffs(self, fn) -> "Poly":
        return Poly(self.nvars, {e: fn(c) for e, c in self.terms.items()})

    def to_exact(self) -> "Poly":
        return self.map_coeffs(to_exact)

    def to_complex(self) -> "Poly":
        return self.map_coeffs(complex)

    def __call__(self, *values):
        """Evaluate at numbers (or any ring elements supporting ``*``/``**``)."""
        if len(values) != self.nvars:
            raise ValueError(f"expected {self.nvars} values, got {len(values)}")
        total = 0
        for e, c in self.terms.items():
            t = c
            for v, k in zip(values, e):
                if k:
                    t = t * v ** k
            total = total + t
        return total

    def substitute(self, polys: Sequence["Poly"]) -> "Poly":
        """Replace variable ``i`` by ``polys[i]`` (all in a common ring)."""
        if len(polys) != self.nvars:
            raise ValueError("need one replacement per variable")
        nv = polys[0].nvars
        out = Poly(nv)
        cache: dict = {}
        for e, c in self.terms.items():
            t = Poly.const(nv, c)
            for i, k in enumerate(e):
                if k:
                    key = (i, k)
                    if key not in cache:
                        cache[key] = polys[i] ** k
                    t = t * cache[key]
            out = out + t
        return out

    def partial(self, i: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = c * e[i]
        return Poly(self.nvars, out)

    def compose_series(self, series: Sequence[TruncatedSeries], order: int) -> TruncatedSeries:
        """Evaluate on univariate truncated series (all variables)."""
        powers: dict = {}
        total = TruncatedSeries.zero(order)
        for e, c in self.terms.items():
            t = TruncatedSeries.constant(c, order)
            for i, k in enumerate(e):
                if k:
                    if (i, k) not in powers:
                        powers[(i, k)] = series[i].truncate(order) ** k
                    t = t * powers[(i, k)]
            total = total + t
        return total
