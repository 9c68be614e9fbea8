from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from emergelab.interval import Interval

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def intervals(draw):
    a, b = draw(finite), draw(finite)
    return Interval(min(a, b), max(a, b))


def _points(iv):
    return [Fraction(iv.lo), Fraction(iv.hi), (Fraction(iv.lo) + Fraction(iv.hi)) / 2]


@given(intervals(), intervals())
def test_operations_enclose_exact_results(x, y):
    for p in _points(x):
        for q in _points(y):
            assert (x + y).lo <= p + q <= (x + y).hi
            assert (x - y).lo <= p - q <= (x - y).hi
            assert (x * y).lo <= p * q <= (x * y).hi
            if not (y.lo <= 0 <= y.hi):
                assert (x / y).lo <= p / q <= (x / y).hi


@given(intervals(), st.fractions(min_value=-10, max_value=10, max_denominator=97))
def test_scale_and_shift_enclose(x, f):
    for p in _points(x):
        assert x.scale(f).lo <= p * f <= x.scale(f).hi
        assert x.shift(f).lo <= p + f <= x.shift(f).hi


def test_exact_operations_stay_tight():
    assert Interval(-1.0, 2.0).shift(-1) == Interval(-2.0, 1.0)
    assert Interval(0.0, 2.0).scale(Fraction(3, 2)) == Interval(0.0, 3.0)


def test_inexact_operations_round_outward():
    third = Interval(1.0).scale(Fraction(1, 3))
    assert third.lo < Fraction(1, 3) < third.hi
    assert third.hi - third.lo > 0


def test_set_operations():
    a, b = Interval(0, 1), Interval(0.5, 2)
    assert a.intersects(b) and a.hull(b) == Interval(0, 2)
    assert Interval(0.2, 0.3).subset(a) and not b.subset(a)
    assert 0.5 in a and Interval(0.1, 0.2) in a
    assert [p.as_list() for p in a.split(2)] == [[0.0, 0.5], [0.5, 1.0]]
    assert a.mag() == 1 and a.mid == 0.5 and a.width == 1


def test_empty_and_zero_division():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ZeroDivisionError):
        Interval(1.0) / Interval(-1.0, 1.0)
