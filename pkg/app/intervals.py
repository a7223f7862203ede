from __future__ import annotations

import math
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union

DEFAULT_PRECISION_BITS = 128

_precision_bits: ContextVar[int] = ContextVar("precision_bits", default=DEFAULT_PRECISION_BITS)


class IntervalDomainError(ValueError):
    def __init__(self, message: str, code: str = "domain") -> None:
        super().__init__(message)
        self.code = code


class PrecisionError(RuntimeError):
    def __init__(self, message: str, code: str = "precision") -> None:
        super().__init__(message)
        self.code = code


def get_precision() -> int:
    return _precision_bits.get()


@contextmanager
def working_precision(bits: int) -> Iterator[int]:
    if bits <= 0:
        raise ValueError("precision bits must be a positive integer")
    token = _precision_bits.set(bits)
    try:
        yield bits
    finally:
        _precision_bits.reset(token)


def _is_dyadic_within(value: Fraction, scale: int) -> bool:
    den = value.denominator
    return den & (den - 1) == 0 and den <= scale


def round_down(value: Fraction, bits: int | None = None) -> Fraction:
    scale = 1 << (bits or get_precision())
    if _is_dyadic_within(value, scale):
        return value
    return Fraction((value.numerator * scale) // value.denominator, scale)


def round_up(value: Fraction, bits: int | None = None) -> Fraction:
    scale = 1 << (bits or get_precision())
    if _is_dyadic_within(value, scale):
        return value
    return Fraction(-((-value.numerator * scale) // value.denominator), scale)


def _iroot(value: int, n: int) -> int:
    """Floor of the n-th root of a non-negative integer."""
    if value < 2 or n == 1:
        return value
    x = 1 << ((value.bit_length() + n - 1) // n)
    while True:
        y = ((n - 1) * x + value // x ** (n - 1)) // n
        if y >= x:
            return x
        x = y


def _root_floor(value: Fraction, n: int, bits: int) -> Fraction:
    scaled = (value.numerator << (n * bits)) // value.denominator
    return Fraction(_iroot(scaled, n), 1 << bits)


def _root_ceil(value: Fraction, n: int, bits: int) -> Fraction:
    scaled = -((-(value.numerator << (n * bits))) // value.denominator)
    root = _iroot(scaled, n)
    if root**n < scaled:
        root += 1
    return Fraction(root, 1 << bits)


Scalar = Union[int, Fraction, "CertifiedInterval"]


@dataclass(frozen=True)
class CertifiedInterval:
    """Closed enclosure [lo, hi] of a real quantity.

    Exact inputs keep their rational endpoints; every operation that cannot be
    done exactly rounds its result outward to the working precision.
    """

    lo: Fraction
    hi: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"interval lower end {self.lo} exceeds upper end {self.hi}")

    @classmethod
    def exact(cls, value: int | Fraction) -> "CertifiedInterval":
        q = Fraction(value)
        return cls(q, q)

    @classmethod
    def coerce(cls, value: Scalar) -> "CertifiedInterval":
        if isinstance(value, CertifiedInterval):
            return value
        return cls.exact(value)

    @classmethod
    def outward(cls, lo: Fraction, hi: Fraction) -> "CertifiedInterval":
        return cls(round_down(lo), round_up(hi))

    @classmethod
    def around(cls, center: Fraction, radius: Fraction) -> "CertifiedInterval":
        return cls(center - radius, center + radius)

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    def approx(self) -> tuple[float, float]:
        return float(self.lo), float(self.hi)

    def contains(self, value: Scalar) -> bool:
        other = CertifiedInterval.coerce(value)
        return self.lo <= other.lo and other.hi <= self.hi

    def contains_zero(self) -> bool:
        return self.lo <= 0 <= self.hi

    def hull(self, other: Scalar) -> "CertifiedInterval":
        o = CertifiedInterval.coerce(other)
        return CertifiedInterval(min(self.lo, o.lo), max(self.hi, o.hi))

    def subdivide(self, pieces: int) -> list["CertifiedInterval"]:
        if pieces < 1:
            raise ValueError("pieces must be at least 1")
        step = self.width / pieces
        cuts = [self.lo + step * i for i in range(pieces)] + [self.hi]
        return [CertifiedInterval(cuts[i], cuts[i + 1]) for i in range(pieces)]

    # comparisons are certain only when the enclosures are separated
    def certainly_lt(self, other: Scalar) -> bool:
        return self.hi < CertifiedInterval.coerce(other).lo

    def certainly_le(self, other: Scalar) -> bool:
        return self.hi <= CertifiedInterval.coerce(other).lo

    def certainly_gt(self, other: Scalar) -> bool:
        return self.lo > CertifiedInterval.coerce(other).hi

    def certainly_ge(self, other: Scalar) -> bool:
        return self.lo >= CertifiedInterval.coerce(other).hi

    def certainly_positive(self) -> bool:
        return self.lo > 0

    def certainly_negative(self) -> bool:
        return self.hi < 0

    def __add__(self, other: Scalar) -> "CertifiedInterval":
        o = CertifiedInterval.coerce(other)
        return CertifiedInterval.outward(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self) -> "CertifiedInterval":
        return CertifiedInterval(-self.hi, -self.lo)

    def __sub__(self, other: Scalar) -> "CertifiedInterval":
        o = CertifiedInterval.coerce(other)
        return CertifiedInterval.outward(self.lo - o.hi, self.hi - o.lo)

    def __rsub__(self, other: Scalar) -> "CertifiedInterval":
        return CertifiedInterval.coerce(other) - self

    def __mul__(self, other: Scalar) -> "CertifiedInterval":
        o = CertifiedInterval.coerce(other)
        products = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return CertifiedInterval.outward(min(products), max(products))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "CertifiedInterval":
        o = CertifiedInterval.coerce(other)
        if o.contains_zero():
            raise IntervalDomainError("division by an interval containing zero")
        quotients = (self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi)
        return CertifiedInterval.outward(min(quotients), max(quotients))

    def __rtruediv__(self, other: Scalar) -> "CertifiedInterval":
        return CertifiedInterval.coerce(other) / self

    def __abs__(self) -> "CertifiedInterval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return CertifiedInterval(Fraction(0), max(-self.lo, self.hi))

    def square(self) -> "CertifiedInterval":
        mag = abs(self)
        return CertifiedInterval.outward(mag.lo * mag.lo, mag.hi * mag.hi)

    def sqrt(self) -> "CertifiedInterval":
        if self.lo < 0:
            raise IntervalDomainError(f"square root of an enclosure reaching below zero ({float(self.lo):.3e})")
        bits = get_precision()
        return CertifiedInterval(_root_floor(self.lo, 2, bits), _root_ceil(self.hi, 2, bits))

    def pow_rational(self, exponent: Fraction) -> "CertifiedInterval":
        """Enclosure of v**exponent for v >= 0 and a rational exponent >= 0."""
        p = Fraction(exponent)
        if p < 0:
            raise IntervalDomainError("negative exponents are not supported")
        if self.lo < 0:
            raise IntervalDomainError("fractional power of an enclosure reaching below zero")
        if p == 0:
            return CertifiedInterval.exact(1)
        m, n = p.numerator, p.denominator
        if n == 1:
            return CertifiedInterval.outward(self.lo**m, self.hi**m)
        bits = get_precision()
        return CertifiedInterval(_root_floor(self.lo**m, n, bits), _root_ceil(self.hi**m, n, bits))


def dyadic_ceiling(value: Fraction, bits: int) -> Fraction:
    """Smallest multiple of 2**-bits strictly greater than value."""
    scale = 1 << bits
    return Fraction(math.floor(value * scale) + 1, scale)
