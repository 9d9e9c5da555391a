from __future__ import annotations

import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from stokeslab.series import (INFINITE, ComposeConstantTerm, GaussianFraction, JetBeyondOrder,
                              SeriesVec, TruncatedSeries, add, compose, differentiate,
                              euler_series, jet, mul, partial_sum_eval, tail, valuation)

ORDER = 8
ints = st.integers(-5, 5)
coeff_lists = st.lists(ints, min_size=ORDER + 1, max_size=ORDER + 1)


def ts(c):
    return TruncatedSeries([Fraction(v) for v in c])


def no_constant(c):
    return ts([0] + list(c[1:]))


# -- examples


def test_add_examples():
    assert add(ts([1, 1]), ts([1, -1])) == ts([2, 0])
    e = euler_series(20)
    assert add(e, TruncatedSeries.zero(20)) == e
    assert (e + (-e)).is_zero()


def test_add_takes_min_order():
    assert add(ts([1, 2, 3]), ts([1, 1])).order == 1


def test_compose_geometric():
    geo = TruncatedSeries([1] * 11)
    out = compose(geo, ts([0, 2] + [0] * 9))
    assert out.coeffs == tuple(2 ** n for n in range(11))


def test_compose_with_zero_gives_constant():
    f = ts([3, 1, 4, 1, 5])
    assert compose(f, TruncatedSeries.zero(4)) == TruncatedSeries.constant(3, 4)


def test_compose_euler_with_2x():
    out = compose(euler_series(15), ts([0, 2] + [0] * 14))
    assert out[0] == 0
    assert all(out[n] == math.factorial(n - 1) * 2 ** n for n in range(1, 16))


def test_compose_rejects_constant_term():
    with pytest.raises(ComposeConstantTerm):
        compose(ts([1, 1]), ts([1, 1]))


def test_jet_examples():
    assert jet(ts([1, 1, 2, 6]), 2) == ts([1, 1, 2, 0])
    assert jet(ts([7, 1, 2]), 0) == ts([7, 0, 0])
    e = euler_series(10)
    assert jet(e, 3).coeffs[:4] == (0, 1, 1, 2) and not any(jet(e, 3).coeffs[4:])
    with pytest.raises(JetBeyondOrder):
        jet(ts([1, 2]), 2)


def test_tail_examples():
    e = euler_series(20)
    t1 = tail(e, 1)
    assert t1.order == 19
    assert all(t1[m] == math.factorial(m) for m in range(1, 20)) and t1[0] == 0
    phi = ts([0, 3, 1, 4])
    assert tail(phi, 0) == phi
    # J_k keeps degree k, so x^k is swallowed by the jet and x^(k+1) leaves x behind
    assert tail(TruncatedSeries.monomial(3, 6), 3).is_zero()
    assert tail(TruncatedSeries.monomial(3, 6), 2) == TruncatedSeries.monomial(1, 4)
    with pytest.raises(JetBeyondOrder):
        tail(phi, 4)


def test_valuation_and_partial_sum():
    assert valuation(ts([0, 0, 0, 1, 0, 1])) == 3
    assert valuation(TruncatedSeries.zero(5)) is INFINITE
    assert INFINITE > 10 ** 9
    v = partial_sum_eval(euler_series(10), 0.1, 3)
    assert v == pytest.approx(0.112, abs=1e-15)


def test_differentiate():
    assert differentiate(ts([5, 1, 1, 1])) == ts([1, 2, 3])


def test_reciprocal_of_unit():
    one_minus_x = ts([1, -1] + [0] * 6)
    assert one_minus_x.reciprocal() == TruncatedSeries([1] * 8)


def test_json_roundtrip():
    s = TruncatedSeries([0.5, 1 + 2j, -3])
    back = TruncatedSeries.from_json(s.to_json())
    assert back.to_complex() == s.to_complex()
    assert json.loads(s.to_json()) == [[0.5, 0.0], [1.0, 2.0], [-3.0, 0.0]]


def test_seriesvec_common_order():
    v = SeriesVec((ts([0, 1, 2]), ts([0, 3, 4])))
    assert v.r == 2 and v.order == 2
    assert v.coefficient(1) == [1, 3]
    back = SeriesVec.from_json(v.to_json())
    assert [complex(c) for c in back[1].coeffs] == [0, 3, 4]
    # mixed orders are truncated to the common one
    assert SeriesVec((ts([0, 1]), ts([0, 1, 2]))).order == 1


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        TruncatedSeries([1.0, float("nan")])


def test_gaussian_fraction_arithmetic():
    a = GaussianFraction(1, -1)
    b = a ** -2
    assert b == GaussianFraction(0, Fraction(1, 2))
    assert complex(a * a.conjugate()) == 2
    assert a / a == 1


# -- properties


@given(coeff_lists, coeff_lists, coeff_lists)
def test_ring_axioms(a, b, c):
    a, b, c = ts(a), ts(b), ts(c)
    assert mul(mul(a, b), c) == mul(a, mul(b, c))
    assert mul(a, add(b, c)) == add(mul(a, b), mul(a, c))
    assert add(a, b) == add(b, a)


@given(coeff_lists, st.integers(0, ORDER))
def test_jet_plus_tail_reconstructs(c, k):
    phi = ts(c)
    back = jet(phi, k) + tail(phi, k).shift_up(k)
    assert back == phi


@given(coeff_lists, st.integers(0, ORDER - 1))
def test_tail_recursion(c, k):
    phi = ts(c)
    lhs = tail(phi, k)
    rhs = (TruncatedSeries.constant(phi[k + 1], ORDER - k - 1) + tail(phi, k + 1)).shift_up(1)
    assert lhs.truncate(ORDER - k - 1) == rhs.truncate(ORDER - k - 1)


@given(coeff_lists, coeff_lists, coeff_lists)
def test_compose_associative(f, g, h):
    f, g, h = ts(f), no_constant(g), no_constant(h)
    assert compose(compose(f, g), h) == compose(f, compose(g, h))


@given(coeff_lists)
def test_float_and_exact_agree(c):
    a = ts(c)
    assert (a * a).to_complex() == a.to_complex() * a.to_complex()
