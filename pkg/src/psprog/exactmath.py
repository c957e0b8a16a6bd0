"""Exact rationals, combinatorial tables, and certified real enclosures.

Every real quantity in the package (values and derivatives of the catalog
functions, Taylor coefficients, fractional parts) is carried as a
:class:`CertifiedReal`: a pair of dyadic endpoints produced by MPFR with
directed rounding, so ``lower <= true value <= upper`` always holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Optional, Union

import gmpy2
from gmpy2 import mpfr, mpq, mpz

START_BITS = 128
MAX_BITS = 16384
STIRLING_MAX = 64

Number = Union[int, Fraction, "CertifiedReal"]


class UnresolvedFloorError(ArithmeticError):
    """Raised when the refinement budget runs out before a floor is decided.

    The final enclosure is kept on ``.enclosure`` so callers can report it.
    """

    def __init__(self, enclosure: "CertifiedReal", what: str = "value"):
        self.enclosure = enclosure
        super().__init__(
            f"unresolved floor of {what}: enclosure [{enclosure.lower}, {enclosure.upper}] "
            f"still straddles an integer at {enclosure.precision_bits} bits"
        )


def as_rational(value) -> Fraction:
    """Parse ``value`` as an exact rational.

    Accepts ints, Fractions, and strings such as ``"3/2"`` or ``"1.5"``
    (decimals are read as exact decimal fractions, never through a float).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not an exact rational: {value!r}") from exc
    if isinstance(value, float):
        raise TypeError("floats are not accepted as exact parameters; pass a string or Fraction")
    if type(value).__name__ == "mpq":
        return Fraction(int(value.numerator), int(value.denominator))
    raise TypeError(f"cannot interpret {value!r} as a rational")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------------------
# combinatorial tables


def _build_stirling(nmax: int) -> tuple:
    table = [[0] * (nmax + 1) for _ in range(nmax + 1)]
    table[0][0] = 1
    for n in range(1, nmax + 1):
        for k in range(1, n + 1):
            table[n][k] = k * table[n - 1][k] + table[n - 1][k - 1]
    return tuple(tuple(row) for row in table)


# built eagerly so concurrent readers never see a partial table
_STIRLING2 = _build_stirling(STIRLING_MAX)


def stirling2(l: int, i: int) -> int:
    """Stirling number of the second kind S(l, i), for 0 <= i <= l <= 64."""
    if not (isinstance(l, int) and isinstance(i, int)):
        raise TypeError("stirling2 takes integer arguments")
    if not 0 <= i <= l <= STIRLING_MAX:
        raise ValueError(f"stirling2 requires 0 <= i <= l <= {STIRLING_MAX}, got l={l}, i={i}")
    return _STIRLING2[l][i]


def binomial(n: int, l: int) -> int:
    """C(n, l) = (n)_l / l!; zero when 0 <= n < l."""
    if n < 0 or l < 0:
        raise ValueError("binomial is defined here for non-negative arguments only")
    return math.comb(n, l)


def falling_factorial(x, l: int) -> Fraction:
    """(x)_l = x (x-1) ... (x-l+1), with (x)_0 = 1, for rational x."""
    x = as_rational(x)
    out = Fraction(1)
    for t in range(l):
        out *= x - t
    return out


# ---------------------------------------------------------------------------
# certified reals


@lru_cache(maxsize=None)
def _contexts(bits: int):
    down = gmpy2.context(precision=bits, round=gmpy2.RoundDown)
    up = gmpy2.context(precision=bits, round=gmpy2.RoundUp)
    return down, up


def precision_schedule(start: int = START_BITS, cap: int = MAX_BITS) -> Iterator[int]:
    """Doubling precision schedule ``start, 2*start, ...`` up to ``cap``."""
    bits = start
    while bits <= cap:
        yield bits
        bits *= 2


def _to_mpfr_bounds(q: Fraction, bits: int):
    down, up = _contexts(bits)
    num, den = mpz(q.numerator), mpz(q.denominator)
    return down.div(num, den), up.div(num, den)


@dataclass(frozen=True, eq=False)
class CertifiedReal:
    """Closed interval ``[lower, upper]`` with dyadic (MPFR) endpoints.

    ``source``, when present, recomputes the enclosure at a requested
    precision; :meth:`refine` intersects the new enclosure with the current
    one so successive refinements are nested.
    """

    lower: mpfr
    upper: mpfr
    precision_bits: int
    source: Optional[Callable[[int], "CertifiedReal"]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"empty enclosure [{self.lower}, {self.upper}]")

    # construction -----------------------------------------------------
    @classmethod
    def exact(cls, value, bits: int = START_BITS) -> "CertifiedReal":
        q = as_rational(value)
        lo, hi = _to_mpfr_bounds(q, bits)
        return cls(lo, hi, bits, source=lambda b, q=q: cls.exact(q, b))

    @classmethod
    def from_bounds(cls, lower, upper, bits: int = START_BITS) -> "CertifiedReal":
        """Enclosure from rational bounds (rounded outward to dyadics)."""
        lo, _ = _to_mpfr_bounds(as_rational(lower), bits)
        _, hi = _to_mpfr_bounds(as_rational(upper), bits)
        return cls(lo, hi, bits)

    # views ------------------------------------------------------------
    @property
    def lower_q(self) -> Fraction:
        n, d = self.lower.as_integer_ratio()
        return Fraction(int(n), int(d))

    @property
    def upper_q(self) -> Fraction:
        n, d = self.upper.as_integer_ratio()
        return Fraction(int(n), int(d))

    @property
    def width(self) -> mpfr:
        return _contexts(self.precision_bits)[1].sub(self.upper, self.lower)

    @property
    def mid(self) -> float:
        return float((self.lower + self.upper) / 2)

    def __float__(self) -> float:
        return self.mid

    def __repr__(self) -> str:
        return f"CertifiedReal([{float(self.lower)!r}, {float(self.upper)!r}], bits={self.precision_bits})"

    def contains(self, value) -> bool:
        q = mpq(as_rational(value)) if not isinstance(value, CertifiedReal) else None
        if q is None:
            return self.lower <= value.lower and value.upper <= self.upper
        return self.lower <= q <= self.upper

    def is_positive(self) -> bool:
        return self.lower > 0

    def is_negative(self) -> bool:
        return self.upper < 0

    # refinement -------------------------------------------------------
    def refine(self, bits: int) -> "CertifiedReal":
        if self.source is None:
            raise ValueError("this enclosure has no source to refine from")
        new = self.source(bits)
        lo = max(self.lower, new.lower)
        hi = min(self.upper, new.upper)
        return CertifiedReal(lo, hi, max(bits, self.precision_bits), source=self.source)

    # arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "CertifiedReal":
        if isinstance(other, CertifiedReal):
            return other
        return CertifiedReal.exact(other, self.precision_bits)

    def _derived(self, lo, hi, other: Optional["CertifiedReal"], op) -> "CertifiedReal":
        bits = self.precision_bits if other is None else min(self.precision_bits, other.precision_bits)
        src = None
        if self.source is not None and (other is None or other.source is not None):
            a_src, b_src = self.source, None if other is None else other.source
            if b_src is None:
                src = lambda b: op(a_src(b))
            else:
                src = lambda b: op(a_src(b), b_src(b))
        return CertifiedReal(lo, hi, bits, source=src)

    def __add__(self, other) -> "CertifiedReal":
        o = self._coerce(other)
        down, up = _contexts(min(self.precision_bits, o.precision_bits))
        return self._derived(down.add(self.lower, o.lower), up.add(self.upper, o.upper), o,
                             lambda a, b: a + b)

    __radd__ = __add__

    def __neg__(self) -> "CertifiedReal":
        return self._derived(-self.upper, -self.lower, None, lambda a: -a)

    def __sub__(self, other) -> "CertifiedReal":
        o = self._coerce(other)
        down, up = _contexts(min(self.precision_bits, o.precision_bits))
        return self._derived(down.sub(self.lower, o.upper), up.sub(self.upper, o.lower), o,
                             lambda a, b: a - b)

    def __rsub__(self, other) -> "CertifiedReal":
        return self._coerce(other) - self

    def __mul__(self, other) -> "CertifiedReal":
        o = self._coerce(other)
        down, up = _contexts(min(self.precision_bits, o.precision_bits))
        pairs = ((self.lower, o.lower), (self.lower, o.upper), (self.upper, o.lower), (self.upper, o.upper))
        lo = min(down.mul(a, b) for a, b in pairs)
        hi = max(up.mul(a, b) for a, b in pairs)
        return self._derived(lo, hi, o, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "CertifiedReal":
        o = self._coerce(other)
        if o.lower <= 0 <= o.upper:
            raise ZeroDivisionError("divisor enclosure contains zero")
        down, up = _contexts(min(self.precision_bits, o.precision_bits))
        pairs = ((self.lower, o.lower), (self.lower, o.upper), (self.upper, o.lower), (self.upper, o.upper))
        lo = min(down.div(a, b) for a, b in pairs)
        hi = max(up.div(a, b) for a, b in pairs)
        return self._derived(lo, hi, o, lambda a, b: a / b)

    def __rtruediv__(self, other) -> "CertifiedReal":
        return self._coerce(other) / self

    def log(self) -> "CertifiedReal":
        if self.lower <= 0:
            raise ValueError("log of an enclosure that is not strictly positive")
        down, up = _contexts(self.precision_bits)
        return self._derived(down.log(self.lower), up.log(self.upper), None, lambda a: a.log())

    def exp(self) -> "CertifiedReal":
        down, up = _contexts(self.precision_bits)
        return self._derived(down.exp(self.lower), up.exp(self.upper), None, lambda a: a.exp())

    def pow(self, exponent) -> "CertifiedReal":
        """``self ** exponent`` for a strictly positive base; exponent may be an enclosure."""
        if self.lower <= 0:
            raise ValueError("pow needs a strictly positive base")
        e = self._coerce(exponent)
        down, up = _contexts(min(self.precision_bits, e.precision_bits))
        # x**e is monotone in each argument separately on x > 0: extremes sit at corners
        corners = [(b, x) for b in (self.lower, self.upper) for x in (e.lower, e.upper)]
        lo = min(down.pow(b, x) for b, x in corners)
        hi = max(up.pow(b, x) for b, x in corners)
        return self._derived(lo, hi, e, lambda a, b: a.pow(b))

    __pow__ = pow

    def abs_upper(self) -> mpfr:
        return max(abs(self.lower), abs(self.upper))

    # floors ------------------------------------------------------------
    def floor_candidates(self) -> tuple[int, int]:
        # exact: gmpy2.floor would round through the default 53-bit context
        return _floor_exact(self.lower), _floor_exact(self.upper)

    def frac(self, schedule: Optional[Iterable[int]] = None) -> tuple[int, "CertifiedReal"]:
        """Return ``(floor, fractional-part enclosure)`` via :func:`certify_floor`."""
        m = certify_floor(self, schedule)
        cur = self if self.floor_candidates() == (m, m) else self._refined_until(m, schedule)
        return m, cur - m

    def _refined_until(self, m: int, schedule) -> "CertifiedReal":
        cur = self
        for bits in (schedule if schedule is not None else precision_schedule(self.precision_bits * 2)):
            if cur.floor_candidates() == (m, m):
                break
            cur = cur.refine(bits)
        return cur


def _floor_exact(x: mpfr) -> int:
    n, d = x.as_integer_ratio()
    return int(n) // int(d)


def certify_floor(x: CertifiedReal, schedule: Optional[Iterable[int]] = None) -> int:
    """Return floor(x), refining the enclosure along ``schedule`` until both
    endpoints share a floor.

    The default schedule doubles precision from the current level up to
    ``MAX_BITS``. An empty schedule means no refinement budget. Exhausting the
    schedule raises :class:`UnresolvedFloorError`; nothing is guessed.
    """
    cur = x
    lo, hi = cur.floor_candidates()
    if lo == hi:
        return lo
    if schedule is None:
        schedule = precision_schedule(cur.precision_bits * 2, MAX_BITS)
    for bits in schedule:
        if cur.source is None:
            break
        cur = cur.refine(bits)
        lo, hi = cur.floor_candidates()
        if lo == hi:
            return lo
    raise UnresolvedFloorError(cur)


def integer_root(value: int, q: int) -> tuple[int, bool]:
    """Exact ``(floor(value ** (1/q)), is_exact)`` for a non-negative integer."""
    root, exact = gmpy2.iroot(mpz(value), q)
    return int(root), bool(exact)
