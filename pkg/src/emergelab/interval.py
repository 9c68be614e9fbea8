"""Closed intervals with outward-rounded endpoints.

Each endpoint is the float nearest the exact result in the outward
direction: the floating result is compared with the exact rational value
and stepped one ulp (``math.nextafter``) only when it falls on the wrong
side.  Exact operations therefore stay tight, inexact ones stay sound.
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Real


def _down(exact: Fraction) -> float:
    f = float(exact)
    if Fraction(f) > exact:
        f = math.nextafter(f, -math.inf)
    return f


def _up(exact: Fraction) -> float:
    f = float(exact)
    if Fraction(f) < exact:
        f = math.nextafter(f, math.inf)
    return f


class Interval:
    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        if hi is None:
            hi = lo
        if isinstance(lo, Fraction) or isinstance(hi, Fraction):
            lo, hi = _down(Fraction(lo)), _up(Fraction(hi))
        lo, hi = float(lo), float(hi)
        if not lo <= hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    @staticmethod
    def _coerce(other) -> "Interval":
        if isinstance(other, Interval):
            return other
        if isinstance(other, (Real, Fraction)):
            return Interval(Fraction(other))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Interval(_down(Fraction(self.lo) + Fraction(o.lo)),
                        _up(Fraction(self.hi) + Fraction(o.hi)))

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        prods = [Fraction(p) * Fraction(q) for p in (self.lo, self.hi) for q in (o.lo, o.hi)]
        return Interval(_down(min(prods)), _up(max(prods)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionError("interval divisor contains 0")
        quots = [Fraction(p) / Fraction(q) for p in (self.lo, self.hi) for q in (o.lo, o.hi)]
        return Interval(_down(min(quots)), _up(max(quots)))

    def scale(self, factor: Fraction | float) -> "Interval":
        """Multiply by an exact rational factor."""
        f = Fraction(factor)
        ends = (Fraction(self.lo) * f, Fraction(self.hi) * f)
        return Interval(_down(min(ends)), _up(max(ends)))

    def shift(self, offset: Fraction | float) -> "Interval":
        f = Fraction(offset)
        return Interval(_down(Fraction(self.lo) + f), _up(Fraction(self.hi) + f))

    # -- set operations --------------------------------------------------
    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        return self.lo <= x <= self.hi

    def subset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    @property
    def width(self) -> float:
        return _up(Fraction(self.hi) - Fraction(self.lo))

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def split(self, parts: int) -> list["Interval"]:
        edges = [self.lo + (self.hi - self.lo) * t / parts for t in range(parts + 1)]
        edges[0], edges[-1] = self.lo, self.hi
        return [Interval(edges[t], edges[t + 1]) for t in range(parts)]

    def __eq__(self, other):
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]
