"""Truncated power series with complex or exact coefficients.

A :class:`TruncatedSeries` stores ``c_0 .. c_N`` and represents
``c_0 + c_1 x + ... + c_N x^N + O(x^{N+1})``.  Coefficients are either
Python ``complex`` (float mode) or exact numbers (``int``, ``Fraction`` or
:class:`GaussianFraction`).  Exact mode exists because the golden
coefficients of the bundled equations grow factorially and overflow doubles
near n = 170.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Number
from typing import Iterable, Sequence

DEFAULT_ORDER = 64


class SeriesError(ValueError):
    pass


class ComposeConstantTerm(SeriesError):
    pass


class JetBeyondOrder(SeriesError):
    pass


class _Infinite(int):
    """Valuation of the zero series; compares greater than every integer."""

    def __new__(cls):
        return super().__new__(cls, 0)

    def __repr__(self):
        return "INFINITE"

    __str__ = __repr__

    def __eq__(self, other):
        return isinstance(other, _Infinite)

    def __hash__(self):
        return hash("INFINITE")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, _Infinite)

    def __gt__(self, other):
        return not isinstance(other, _Infinite)

    def __ge__(self, other):
        return True


INFINITE = _Infinite()


class GaussianFraction:
    """Exact complex rational ``re + i*im``."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def coerce(cls, v) -> "GaussianFraction":
        if isinstance(v, GaussianFraction):
            return v
        if isinstance(v, complex):
            return cls(Fraction(v.real), Fraction(v.imag))
        return cls(Fraction(v), 0)

    def __add__(self, o):
        if isinstance(o, float) or isinstance(o, complex):
            return complex(self) + o
        o = GaussianFraction.coerce(o)
        return GaussianFraction(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussianFraction(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, float) or isinstance(o, complex):
            return complex(self) * o
        o = GaussianFraction.coerce(o)
        return GaussianFraction(self.re * o.re - self.im * o.im,
                                self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, float) or isinstance(o, complex):
            return complex(self) / o
        o = GaussianFraction.coerce(o)
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("GaussianFraction division by zero")
        return GaussianFraction((self.re * o.re + self.im * o.im) / d,
                                (self.im * o.re - self.re * o.im) / d)

    def __rtruediv__(self, o):
        return GaussianFraction.coerce(o) / self

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return complex(self) ** n
        if n < 0:
            return GaussianFraction(1) / (self ** (-n))
        out = GaussianFraction(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def conjugate(self):
        return GaussianFraction(self.re, -self.im)

    @property
    def real(self):
        return self.re

    @property
    def imag(self):
        return self.im

    def __eq__(self, o):
        if isinstance(o, (float, complex)):
            return complex(self) == o
        try:
            o = GaussianFraction.coerce(o)
        except (TypeError, ValueError):
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im)) if self.im else hash(self.re)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __abs__(self):
        return abs(complex(self))

    def __repr__(self):
        return f"GaussianFraction({self.re}, {self.im})"


def is_exact(v) -> bool:
    return isinstance(v, (int, Fraction, GaussianFraction)) and not isinstance(v, bool)


def to_exact(v):
    """Exact counterpart of a number (floats are converted bit-exactly)."""
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    if isinstance(v, GaussianFraction):
        return v if v.im else v.re
    if isinstance(v, float):
        return Fraction(v)
    if isinstance(v, complex):
        return GaussianFraction(v.real, v.imag) if v.imag else Fraction(v.real)
    raise TypeError(f"cannot convert {type(v).__name__} to an exact number")


def log_abs(v) -> float:
    """``log|v|`` without overflowing on huge exact values."""
    if isinstance(v, GaussianFraction):
        q = v.re * v.re + v.im * v.im
        return 0.5 * (math.log(q.numerator) - math.log(q.denominator))
    if isinstance(v, Fraction):
        return math.log(abs(v.numerator)) - math.log(v.denominator)
    if isinstance(v, int):
        return math.log(abs(v))
    return math.log(abs(v))


def _is_finite(v) -> bool:
    if is_exact(v):
        return True
    return cmath.isfinite(complex(v))


class TruncatedSeries:
    """Power series ``sum c_n x^n`` known through ``x^order``.

    Instances are immutable.  Binary operations between series of different
    orders truncate to the smaller order.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Iterable[Number], order: int | None = None):
        c = list(coeffs)
        if order is not None:
            if order < 0:
                raise SeriesError("order must be >= 0")
            if len(c) > order + 1:
                c = c[: order + 1]
            else:
                c = c + [0] * (order + 1 - len(c))
        if not c:
            raise SeriesError("a series needs at least one coefficient")
        for v in c:
            if not _is_finite(v):
                raise SeriesError("series coefficients must be finite")
        self._c = tuple(c)

    # construction helpers

    @classmethod
    def zero(cls, order: int = DEFAULT_ORDER) -> "TruncatedSeries":
        return cls([0], order)

    @classmethod
    def constant(cls, c, order: int = DEFAULT_ORDER) -> "TruncatedSeries":
        return cls([c], order)

    @classmethod
    def monomial(cls, n: int, order: int = DEFAULT_ORDER, c=1) -> "TruncatedSeries":
        return cls([0] * n + [c], order)

    @classmethod
    def from_function(cls, f, order: int = DEFAULT_ORDER) -> "TruncatedSeries":
        """Series with ``c_n = f(n)``."""
        return cls([f(n) for n in range(order + 1)])

    # basic access

    @property
    def coeffs(self) -> tuple:
        return self._c

    @property
    def order(self) -> int:
        return len(self._c) - 1

    def __len__(self):
        return len(self._c)

    def __getitem__(self, n):
        return self._c[n]

    def __iter__(self):
        return iter(self._c)

    def __repr__(self):
        shown = ", ".join(repr(c) for c in self._c[:6])
        tail = ", ..." if len(self._c) > 6 else ""
        return f"TruncatedSeries([{shown}{tail}], order={self.order})"

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return self._c == other._c

    def __hash__(self):
        return hash(self._c)

    @property
    def exact(self) -> bool:
        return all(is_exact(c) for c in self._c)

    def to_exact(self) -> "TruncatedSeries":
        return TruncatedSeries([to_exact(c) for c in self._c])

    def to_complex(self) -> "TruncatedSeries":
        return TruncatedSeries([complex(c) for c in self._c])

    def truncate(self, order: int) -> "TruncatedSeries":
        return TruncatedSeries(self._c, min(order, self.order))

    def is_zero(self) -> bool:
        return not any(self._c)

    def map(self, fn) -> "TruncatedSeries":
        return TruncatedSeries([fn(c) for c in self._c])

    # ring operations

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            return other
        if isinstance(other, (Number, GaussianFraction)):
            return TruncatedSeries.constant(other, self.order)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        n = min(self.order, other.order)
        return TruncatedSeries([a + b for a, b in zip(self._c[: n + 1], other._c[: n + 1])])

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries([-c for c in self._c])

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (Number, GaussianFraction)) and not isinstance(other, TruncatedSeries):
            return TruncatedSeries([c * other for c in self._c])
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        n = min(self.order, other.order)
        a, b = self._c, other._c
        lo_a = _first_nonzero(a, n)
        lo_b = _first_nonzero(b, n)
        out = [0] * (n + 1)
        if lo_a is None or lo_b is None:
            return TruncatedSeries(out)
        for i in range(lo_a, n + 1 - lo_b):
            ai = a[i]
            if not ai:
                continue
            for j in range(lo_b, n + 1 - i):
                bj = b[j]
                if bj:
                    out[i + j] = out[i + j] + ai * bj
        return TruncatedSeries(out)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, TruncatedSeries):
            return self * other.reciprocal()
        return TruncatedSeries([c / other for c in self._c])

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise SeriesError("only non-negative integer powers are supported")
        out = TruncatedSeries.constant(1, self.order)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def reciprocal(self) -> "TruncatedSeries":
        c = self._c
        if not c[0]:
            raise ZeroDivisionError("series with zero constant term is not invertible")
        inv0 = _inverse(c[0])
        out = [inv0]
        for n in range(1, len(c)):
            s = 0
            for k in range(1, n + 1):
                if c[k]:
                    s = s + c[k] * out[n - k]
            out.append(-s * inv0)
        return TruncatedSeries(out)

    def shift_down(self, k: int) -> "TruncatedSeries":
        """Divide by ``x^k``; the first ``k`` coefficients must vanish."""
        if any(self._c[:k]):
            raise SeriesError(f"series is not divisible by x^{k}")
        return TruncatedSeries(self._c[k:] or [0])

    def shift_up(self, k: int) -> "TruncatedSeries":
        """Multiply by ``x^k``; the order grows by ``k``."""
        return TruncatedSeries([0] * k + list(self._c))

    def __call__(self, z, terms: int | None = None):
        return partial_sum_eval(self, z, self.order if terms is None else terms)

    def to_json(self) -> str:
        return json.dumps([[complex(c).real, complex(c).imag] for c in self._c])

    @classmethod
    def from_json(cls, text: str) -> "TruncatedSeries":
        return cls([complex(re, im) for re, im in json.loads(text)])


def _first_nonzero(c, n):
    for i in range(n + 1):
        if c[i]:
            return i
    return None


def _inverse(v):
    if isinstance(v, int):
        return Fraction(1, v)
    if isinstance(v, Fraction):
        return 1 / v
    return 1 / v


def add(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    return a + b


def mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    return a * b


def compose(outer: TruncatedSeries, inner: TruncatedSeries) -> TruncatedSeries:
    """``outer(inner(x))`` by Horner accumulation; needs ``inner(0) == 0``."""
    if inner[0]:
        raise ComposeConstantTerm("inner series must have zero constant term")
    n = min(outer.order, inner.order)
    inner = inner.truncate(n)
    v = valuation(inner)
    if v is INFINITE:
        return TruncatedSeries.constant(outer[0], n)
    # terms of outer beyond n/v cannot reach order n
    top = min(outer.order, n // v)
    acc = TruncatedSeries.constant(outer[top], n)
    for k in range(top - 1, -1, -1):
        acc = acc * inner + outer[k]
    return acc


def jet(phi: TruncatedSeries, k: int) -> TruncatedSeries:
    """Keep coefficients ``0..k``, zero the rest (same order)."""
    if k < 0 or k > phi.order:
        raise JetBeyondOrder(f"jet order {k} outside 0..{phi.order}")
    return TruncatedSeries(list(phi.coeffs[: k + 1]) + [0] * (phi.order - k))


def tail(phi: TruncatedSeries, k: int) -> TruncatedSeries:
    """``(phi - J_k phi) / x^k``; the result has order ``N - k``."""
    if k < 0 or k > phi.order:
        raise JetBeyondOrder(f"tail order {k} outside 0..{phi.order}")
    rest = [0] + list(phi.coeffs[k + 1:])
    return TruncatedSeries(rest, phi.order - k)


def valuation(phi: TruncatedSeries):
    """Index of the first nonzero coefficient, or :data:`INFINITE`."""
    for i, c in enumerate(phi.coeffs):
        if c:
            return i
    return INFINITE


def differentiate(phi: TruncatedSeries) -> TruncatedSeries:
    """Derivative; order drops by one (stays 0 for constants)."""
    c = phi.coeffs
    if len(c) == 1:
        return TruncatedSeries([0])
    return TruncatedSeries([n * c[n] for n in range(1, len(c))])


def partial_sum_eval(phi: TruncatedSeries, z, m: int):
    """``sum_{n <= m} c_n z^n`` by Horner."""
    m = min(m, phi.order)
    acc = 0
    for c in reversed(phi.coeffs[: m + 1]):
        acc = acc * z + c
    return acc


@dataclass(frozen=True)
class SeriesVec:
    """Vector of ``r`` series sharing one truncation order."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise SeriesError("SeriesVec needs r >= 1 components")
        n = min(c.order for c in comps)
        comps = tuple(c.truncate(n) for c in comps)
        object.__setattr__(self, "components", comps)

    @property
    def r(self) -> int:
        return len(self.components)

    @property
    def order(self) -> int:
        return self.components[0].order

    def __getitem__(self, j) -> TruncatedSeries:
        return self.components[j]

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def coefficient(self, n: int) -> list:
        return [c[n] for c in self.components]

    def map(self, fn) -> "SeriesVec":
        return SeriesVec(tuple(fn(c) for c in self.components))

    def truncate(self, order: int) -> "SeriesVec":
        return self.map(lambda c: c.truncate(order))

    def to_complex(self) -> "SeriesVec":
        return self.map(TruncatedSeries.to_complex)

    def __call__(self, z, terms: int | None = None) -> list:
        return [c(z, terms) for c in self.components]

    def to_json(self) -> str:
        return json.dumps([json.loads(c.to_json()) for c in self.components])

    @classmethod
    def from_json(cls, text: str) -> "SeriesVec":
        return cls(tuple(TruncatedSeries([complex(a, b) for a, b in comp])
                         for comp in json.loads(text)))


def euler_series(order: int = DEFAULT_ORDER, exact: bool = True) -> TruncatedSeries:
    """``sum_{n>=1} (n-1)! x^n``."""
    coeffs = [0] + [math.factorial(n - 1) for n in range(1, order + 1)]
    if not exact:
        coeffs = [complex(float(c)) for c in coeffs]
    return TruncatedSeries(coeffs)


def as_sequence(v: Sequence | TruncatedSeries) -> list:
    return list(v.coeffs if isinstance(v, TruncatedSeries) else v)
