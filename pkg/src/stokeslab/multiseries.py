"""Dense truncated multivariate power series (complex, numpy backed).

The truncation is a down-set of exponents: a box ``shape`` optionally cut by
a boolean ``mask`` (e.g. total degree in a group of variables).  Products
drop every monomial outside the down-set, which is an ideal, so truncated
arithmetic is exact on the kept coefficients.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def group_degree_mask(shape: Sequence[int], groups: Sequence[tuple[Sequence[int], int]]) -> np.ndarray:
    """Mask keeping exponents whose summed degree over each group is bounded."""
    mask = np.ones(tuple(shape), dtype=bool)
    grids = np.indices(tuple(shape))
    for axes, bound in groups:
        total = sum(grids[a] for a in axes)
        mask &= total <= bound
    return mask


class MultiSeries:
    __slots__ = ("data", "mask")

    def __init__(self, data: np.ndarray, mask: np.ndarray | None = None):
        data = np.asarray(data, dtype=complex)
        if mask is None:
            mask = np.ones(data.shape, dtype=bool)
        self.mask = mask
        self.data = np.where(mask, data, 0)

    # constructors

    @classmethod
    def zeros(cls, shape, mask=None) -> "MultiSeries":
        return cls(np.zeros(tuple(shape), dtype=complex), mask)

    @classmethod
    def const(cls, c, shape, mask=None) -> "MultiSeries":
        s = cls.zeros(shape, mask)
        s.data[(0,) * len(shape)] = c
        return s

    @classmethod
    def monomial(cls, exps, shape, mask=None, c=1.0) -> "MultiSeries":
        s = cls.zeros(shape, mask)
        if all(e < n for e, n in zip(exps, shape)) and (mask is None or mask[tuple(exps)]):
            s.data[tuple(exps)] = c
        return s

    @classmethod
    def var(cls, i, shape, mask=None) -> "MultiSeries":
        e = [0] * len(shape)
        e[i] = 1
        return cls.monomial(e, shape, mask)

    @classmethod
    def from_univariate(cls, coeffs, axis, shape, mask=None) -> "MultiSeries":
        s = cls.zeros(shape, mask)
        n = min(len(coeffs), shape[axis])
        idx = [0] * len(shape)
        for k in range(n):
            idx[axis] = k
            s.data[tuple(idx)] = complex(coeffs[k])
        return MultiSeries(s.data, mask)

    # properties

    @property
    def shape(self):
        return self.data.shape

    @property
    def nvars(self):
        return self.data.ndim

    def nnz(self) -> int:
        return int(np.count_nonzero(self.data))

    def __getitem__(self, exps):
        return self.data[tuple(exps)]

    def like(self, data) -> "MultiSeries":
        return MultiSeries(data, self.mask)

    # arithmetic

    def _wrap(self, other) -> "MultiSeries":
        if isinstance(other, MultiSeries):
            return other
        return MultiSeries.const(other, self.shape, self.mask)

    def __add__(self, other):
        other = self._wrap(other)
        return self.like(self.data + other.data)

    __radd__ = __add__

    def __neg__(self):
        return self.like(-self.data)

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, MultiSeries):
            return self.like(self.data * other)
        a, b = self, other
        if a.nnz() > b.nnz():
            a, b = b, a
        out = np.zeros(self.shape, dtype=complex)
        shape = self.shape
        for idx in zip(*np.nonzero(a.data)):
            dst = tuple(slice(i, None) for i in idx)
            src = tuple(slice(0, n - i) for i, n in zip(idx, shape))
            out[dst] += a.data[idx] * b.data[src]
        return self.like(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = MultiSeries.const(1.0, self.shape, self.mask)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def integrate(self, axis: int) -> "MultiSeries":
        """Antiderivative in one variable with zero constant of integration."""
        n = self.shape[axis]
        out = np.zeros(self.shape, dtype=complex)
        src = [slice(None)] * self.nvars
        dst = [slice(None)] * self.nvars
        src[axis] = slice(0, n - 1)
        dst[axis] = slice(1, n)
        div = np.arange(1, n).reshape([-1 if i == axis else 1 for i in range(self.nvars)])
        out[tuple(dst)] = self.data[tuple(src)] / div
        return self.like(out)

    def differentiate(self, axis: int) -> "MultiSeries":
        n = self.shape[axis]
        out = np.zeros(self.shape, dtype=complex)
        src = [slice(None)] * self.nvars
        dst = [slice(None)] * self.nvars
        src[axis] = slice(1, n)
        dst[axis] = slice(0, n - 1)
        mul = np.arange(1, n).reshape([-1 if i == axis else 1 for i in range(self.nvars)])
        out[tuple(dst)] = self.data[tuple(src)] * mul
        return self.like(out)

    def substitute(self, targets: Sequence["MultiSeries"]) -> "MultiSeries":
        """Compose: variable ``i`` replaced by ``targets[i]`` (common ring).

        Nested Horner evaluation along the leading axis; targets should have no
        constant term unless the corresponding axis is a polynomial variable.
        """
        if len(targets) != self.nvars:
            raise ValueError("need one target per variable")
        proto = targets[0]

        def ev(arr):
            if arr.ndim == 0:
                return MultiSeries.const(complex(arr), proto.shape, proto.mask)
            t = targets[self.nvars - arr.ndim]
            # Horner over the leading axis of the remaining block
            nz = [k for k in range(arr.shape[0]) if np.any(arr[k])]
            if not nz:
                return MultiSeries.zeros(proto.shape, proto.mask)
            top = nz[-1]
            res = ev(arr[top])
            for k in range(top - 1, -1, -1):
                res = res * t
                if np.any(arr[k]):
                    res = res + ev(arr[k])
            return res

        return ev(self.data)

    def restrict(self, axis: int, value: int = 0) -> np.ndarray:
        """Coefficient block for a fixed exponent of one variable."""
        return np.take(self.data, value, axis=axis)

    def max_abs_diff(self, other: "MultiSeries") -> float:
        return float(np.max(np.abs(self.data - other.data), initial=0.0))

    def items(self):
        for idx in zip(*np.nonzero(self.data)):
            yield tuple(int(i) for i in idx), complex(self.data[idx])

