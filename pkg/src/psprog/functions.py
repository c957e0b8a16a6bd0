"""Catalog of sequence-generating functions f with certified derivatives.

Supported kinds (L = log x, M = log log x):

    pow:α        x^α,          α in (d, d+1) non-integral, d = floor(α)
    xlog:β       x L^β,        β > 1, d = 1
    x2log:γ      x^2 / L^γ,    γ > 0, d = 1
    x2loglog:γ   x^2 / M^γ,    γ > 0, d = 1
    xlogx        x L,          d = 1, not equidistributed (density is a band)

Derivatives are closed forms evaluated in interval arithmetic, so the same
code gives enclosures at an integer point or over a whole interval [a, b].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from typing import Optional

import numpy as np

from .exactmath import (
    START_BITS,
    CertifiedReal,
    UnresolvedFloorError,
    as_rational,
    certify_floor,
    falling_factorial,
    format_rational,
    integer_root,
)

KINDS = ("pow", "xlog", "x2log", "x2loglog", "xlogx")

# relative distance to the nearest integer below which a float64 floor is
# not trusted and the value is recomputed exactly
_POW_SCREEN = 2.0 ** -44
_LOG_SCREEN = 2.0 ** -40


@dataclass(frozen=True)
class FunctionSpec:
    kind: str
    param: Optional[Fraction]
    d: int
    n0: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown function kind {self.kind!r}; expected one of {', '.join(KINDS)}")

    @property
    def label(self) -> str:
        if self.param is None:
            return self.kind
        p = self.param
        return f"{self.kind}:{p.numerator}" if p.denominator == 1 else f"{self.kind}:{format_rational(p)}"

    @property
    def equidistributed(self) -> bool:
        return self.kind != "xlogx"

    @property
    def alpha(self) -> Fraction:
        if self.kind != "pow":
            raise ValueError(f"{self.label} is not a power function")
        return self.param

    def __str__(self) -> str:
        return self.label

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "param": None if self.param is None else format_rational(self.param),
            "d": self.d,
            "n0": self.n0,
        }


# ---------------------------------------------------------------------------
# construction


def power(alpha, d: Optional[int] = None) -> FunctionSpec:
    a = as_rational(alpha)
    if a <= 1:
        raise ValueError(f"pow exponent must exceed 1, got {format_rational(a)}")
    if a.denominator == 1:
        raise ValueError(f"pow exponent must be non-integral, got {a.numerator}")
    dd = math.floor(a) if d is None else d
    if not dd < a < dd + 1:
        raise ValueError(f"pow exponent {format_rational(a)} must lie strictly between d={dd} and d+1")
    return FunctionSpec("pow", a, dd, 1)


def xlog(beta) -> FunctionSpec:
    b = as_rational(beta)
    if b <= 1:
        raise ValueError(f"xlog exponent beta must exceed 1, got {format_rational(b)}")
    return FunctionSpec("xlog", b, 1, max(16, _scan_n0("xlog", b, 16)))


def x2log(gamma) -> FunctionSpec:
    g = as_rational(gamma)
    if g <= 0:
        raise ValueError(f"x2log exponent gamma must be positive, got {format_rational(g)}")
    return FunctionSpec("x2log", g, 1, _scan_n0("x2log", g, 3))


def x2loglog(gamma) -> FunctionSpec:
    g = as_rational(gamma)
    if g <= 0:
        raise ValueError(f"x2loglog exponent gamma must be positive, got {format_rational(g)}")
    return FunctionSpec("x2loglog", g, 1, _scan_n0("x2loglog", g, 3))


def xlogx() -> FunctionSpec:
    return FunctionSpec("xlogx", None, 1, 16)


def parse_function(text: str) -> FunctionSpec:
    """Parse ``pow:3/2``, ``xlog:2``, ``x2log:1``, ``x2loglog:1`` or ``xlogx``."""
    text = text.strip()
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "xlogx":
        if arg:
            raise ValueError("xlogx takes no parameter")
        return xlogx()
    builders = {"pow": power, "xlog": xlog, "x2log": x2log, "x2loglog": x2loglog}
    if kind not in builders:
        raise ValueError(f"unknown function {text!r}; expected pow:α, xlog:β, x2log:γ, x2loglog:γ or xlogx")
    if not arg:
        raise ValueError(f"function {kind!r} needs a parameter, e.g. {kind}:3/2")
    return builders[kind](as_rational(arg))


# ---------------------------------------------------------------------------
# closed-form derivatives over an enclosure X


def _derivative(kind: str, param: Optional[Fraction], order: int, X: CertifiedReal) -> CertifiedReal:
    if kind == "pow":
        a = param
        coeff = falling_factorial(a, order)
        if coeff == 0:
            return CertifiedReal.exact(0, X.precision_bits)
        return X.pow(a - order) * coeff
    L = X.log()
    if kind == "xlogx":
        if order == 0:
            return X * L
        if order == 1:
            return L + 1
        # (1/x)^{(m)} pattern: f^{(m)} = (-1)^m (m-2)! / x^{m-1} for m >= 2
        m = order
        return CertifiedReal.exact((-1) ** m * math.factorial(m - 2), X.precision_bits) / X.pow(m - 1)
    if kind == "xlog":
        b = param
        if order == 0:
            return X * L.pow(b)
        if order == 1:
            return (L + b) * L.pow(b - 1)
        if order == 2:
            return (L + (b - 1)) * L.pow(b - 2) * b / X
        if order == 3:
            return (b * b - 3 * b + 2 - L * L) * L.pow(b - 3) * b / (X * X)
    if kind == "x2log":
        g = param
        if order == 0:
            return X * X / L.pow(g)
        if order == 1:
            return X * (L * 2 - g) / L.pow(g + 1)
        if order == 2:
            return (L * L * 2 - L * (3 * g) + (g * g + g)) / L.pow(g + 2)
        if order == 3:
            poly = L * L * 2 - L * (3 * (g + 1)) + (g + 1) * (g + 2)
            return -(poly * g) / (L.pow(g + 3) * X)
    if kind == "x2loglog":
        g = param
        M = L.log()
        if order == 0:
            return X * X / M.pow(g)
        if order == 1:
            return X * (L * M * 2 - g) / (M.pow(g + 1) * L)
        if order == 2:
            num = L * L * M * M * 2 - L * M * (3 * g) + M * g + (g * g + g)
            return num / (M.pow(g + 2) * L * L)
        if order == 3:
            LM = L * M
            num = (LM * LM * 2 - LM * (3 * g) + M * (3 * g) + (g * g + 3 * g + 2)
                   - LM * M * 3 - LM * 3 + M * M * 2 + M * 3)
            return -(num * g) / (M.pow(g + 3) * X * L * L * L)
    raise ValueError(f"derivative of order {order} not available for {kind}")


def _max_order(f: FunctionSpec) -> int:
    return 64 if f.kind in ("pow", "xlogx") else 3


def eval(f: FunctionSpec, order: int, x: int, bits: int = START_BITS) -> CertifiedReal:  # noqa: A001
    """Certified enclosure of f^{(order)}(x) at an integer x >= f.n0.

    The enclosure carries a refinement source, so callers can tighten it
    with ``.refine(bits)``. Exact integer values of pow are returned as
    degenerate intervals.
    """
    if not isinstance(order, int) or order < 0 or order > f.d + 1:
        raise ValueError(f"derivative order must be in [0, {f.d + 1}] for {f.label}, got {order}")
    if x < f.n0:
        raise ValueError(f"x={x} is below the domain start n0={f.n0} of {f.label}")
    if order == 0:
        exact = exact_integer_check(f, x)
        if exact is not None:
            return CertifiedReal.exact(exact, bits)

    def src(b: int, f=f, order=order, x=x) -> CertifiedReal:
        out = _derivative(f.kind, f.param, order, CertifiedReal.exact(x, b))
        return CertifiedReal(out.lower, out.upper, b, source=src)

    return src(bits)


def eval_interval(f: FunctionSpec, order: int, lo, hi, bits: int = START_BITS) -> CertifiedReal:
    """Enclosure of {f^{(order)}(x) : lo <= x <= hi} (interval extension)."""
    X = CertifiedReal.from_bounds(lo, hi, bits)
    return _derivative(f.kind, f.param, order, X)


def exact_integer_check(f: FunctionSpec, x: int) -> Optional[int]:
    """Return f(x) when it is an integer, otherwise None.

    For pow with α = p/q this is decided exactly: x^α is an integer iff x^p
    is a perfect q-th power. For log-bearing kinds values at x >= 2 are
    treated as never integral (log of an integer >= 2 is transcendental);
    at x = 1 they are 0 or undefined.
    """
    if x < 1:
        raise ValueError("exact_integer_check needs a positive integer")
    if f.kind == "pow":
        p, q = f.param.numerator, f.param.denominator
        root, exact = integer_root(x ** p, q)
        return root if exact else None
    if x == 1 and f.kind in ("xlog", "xlogx"):
        return 0
    return None


def floor_f(f: FunctionSpec, x: int) -> int:
    """Exact floor(f(x))."""
    if x < f.n0:
        raise ValueError(f"x={x} is below the domain start n0={f.n0} of {f.label}")
    if f.kind == "pow":
        # floor(x^{p/q}) = floor((x^p)^{1/q}) as an exact integer root
        p, q = f.param.numerator, f.param.denominator
        return integer_root(x ** p, q)[0]
    exact = exact_integer_check(f, x)
    if exact is not None:
        return exact
    return certify_floor(eval(f, 0, x))


def floor_certified(f: FunctionSpec, x: int) -> int:
    """floor(f(x)) through the interval route only (used to cross-check floor_f)."""
    exact = exact_integer_check(f, x)
    if exact is not None:
        return exact
    return certify_floor(eval(f, 0, x))


def frac_f(f: FunctionSpec, x: int, bits: int = START_BITS) -> CertifiedReal:
    """Enclosure of the fractional part {f(x)}; exactly 0 at integer values."""
    exact = exact_integer_check(f, x)
    if exact is not None:
        return CertifiedReal.exact(0, bits)
    val = eval(f, 0, x, bits)
    m = floor_f(f, x)
    return val - m


# ---------------------------------------------------------------------------
# vectorized floors


def float_values(f: FunctionSpec, n: np.ndarray, order: int = 0) -> np.ndarray:
    """Float64 approximation of f^{(order)} at the points ``n`` (no certification)."""
    x = np.asarray(n, dtype=np.float64)
    if f.kind == "pow":
        a = f.param
        return float(falling_factorial(a, order)) * np.power(x, float(a - order))
    L = np.log(x)
    if f.kind == "xlogx":
        if order == 0:
            return x * L
        if order == 1:
            return L + 1.0
        m = order
        return (-1.0) ** m * math.factorial(m - 2) / x ** (m - 1)
    p = float(f.param)
    if f.kind == "xlog":
        if order == 0:
            return x * L ** p
        if order == 1:
            return (L + p) * L ** (p - 1)
        if order == 2:
            return p * (p + L - 1) * L ** (p - 2) / x
        return p * (p * p - 3 * p + 2 - L * L) * L ** (p - 3) / (x * x)
    if f.kind == "x2log":
        if order == 0:
            return x * x / L ** p
        if order == 1:
            return x * (2 * L - p) / L ** (p + 1)
        if order == 2:
            return (2 * L * L - 3 * p * L + p * p + p) / L ** (p + 2)
        return -p * (2 * L * L - 3 * (p + 1) * L + (p + 1) * (p + 2)) / (L ** (p + 3) * x)
    M = np.log(L)
    if order == 0:
        return x * x / M ** p
    if order == 1:
        return x * (2 * L * M - p) / (M ** (p + 1) * L)
    if order == 2:
        return (p * p - 3 * p * L * M + p * M + p + 2 * L * L * M * M) / (M ** (p + 2) * L * L)
    num = (p * p - 3 * p * L * M + 3 * p * M + 3 * p + 2 * L * L * M * M - 3 * L * M * M
           - 3 * L * M + 2 * M * M + 3 * M + 2)
    return -p * num / (M ** (p + 3) * x * L ** 3)


def floors(f: FunctionSpec, start: int, stop: int) -> np.ndarray:
    """Exact floor(f(n)) for n in [start, stop) as an int64 array (object
    dtype once values leave the int64 range).

    A float64 pass computes every floor; values within a small relative
    margin of an integer are recomputed exactly (integer roots for pow,
    certified intervals otherwise), so the result equals ``floor_f``.
    """
    if start < f.n0:
        raise ValueError(f"start={start} is below the domain start n0={f.n0} of {f.label}")
    if stop <= start:
        return np.zeros(0, dtype=np.int64)
    n = np.arange(start, stop, dtype=np.int64)
    v = float_values(f, n)
    if not np.all(np.isfinite(v)) or float(np.max(np.abs(v))) >= 2.0 ** 52:
        vals = [floor_f(f, int(x)) for x in n]
        # beyond int64 the exact values travel as Python ints
        big = max(abs(vals[0]), abs(vals[-1])) >= 2 ** 62
        return np.array(vals, dtype=object if big else np.int64)
    out = np.floor(v)
    dist = np.minimum(v - out, out + 1 - v)
    margin = (_POW_SCREEN if f.kind == "pow" else _LOG_SCREEN) * np.maximum(1.0, np.abs(v))
    result = out.astype(np.int64)
    for idx in np.nonzero(dist <= margin)[0]:
        result[idx] = floor_f(f, int(n[idx]))
    return result


# ---------------------------------------------------------------------------
# regularity data


def _conditions_hold(kind: str, param, lo: int, hi: int, bits: int = 128) -> bool:
    """f' >= 1, f'' > 0 and f''' < 0 certified on the whole interval [lo, hi]."""
    X = CertifiedReal.from_bounds(lo, hi, bits)
    try:
        d1 = _derivative(kind, param, 1, X)
        d2 = _derivative(kind, param, 2, X)
        d3 = _derivative(kind, param, 3, X)
    except (ValueError, ZeroDivisionError):
        return False
    return d1.lower >= 1 and d2.lower > 0 and d3.upper < 0


@lru_cache(maxsize=None)
def _scan_n0(kind: str, param, start: int, limit: int = 512) -> int:
    """Smallest certified n >= start after which the d = 1 regularity conditions hold.

    Unit intervals are certified up to ``limit``; beyond it dyadic blocks
    [2^j, 2^{j+1}] are cut into 64 pieces and certified up to 2^200. A
    failing piece moves the start past its right end, so the result can
    overshoot the true threshold slightly but never undershoots it.
    """
    first_good = start
    for n in range(start, limit):
        if not _conditions_hold(kind, param, n, n + 1):
            first_good = n + 1
    lo = limit
    while lo < 2 ** 200:
        hi = lo * 2
        if not _conditions_hold(kind, param, lo, hi):
            step = max(1, (hi - lo) // 64)
            for a in range(lo, hi, step):
                b = min(hi, a + step)
                if not _conditions_hold(kind, param, a, b):
                    first_good = b
        lo = hi
    if first_good >= 2 ** 199:
        raise ValueError(f"could not certify a domain start for {kind}:{param}")
    return first_good


@dataclass(frozen=True)
class RegularityData:
    """Constants used by the variable-r search.

    ``c_of_delta(δ)`` bounds f^{(d+1)}(δx) <= c(δ) f^{(d+1)}(x) for x past
    ``dprime_positive_from``. It is exact for pow and a numerical estimate
    (sup over a log-spaced grid) for the other kinds.
    """

    f: FunctionSpec
    dprime_positive_from: int
    exact: bool = field(default=True)

    def c_of_delta(self, delta) -> Fraction | float:
        delta = as_rational(delta)
        if not 0 < delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.f.kind == "pow":
            e = self.f.alpha - self.f.d - 1
            # δ^{α-d-1}: exact when the power is rational, else a certified upper bound
            p, q = e.numerator, e.denominator
            base = delta ** p  # p < 0 so this is 1/δ^{|p|}
            root, ok = integer_root(base.numerator, q)
            root_d, ok_d = integer_root(base.denominator, q)
            if ok and ok_d:
                return Fraction(root, root_d)
            up = CertifiedReal.exact(delta, 256).pow(CertifiedReal.exact(e, 256))
            return up.upper_q
        xs = np.geomspace(self.dprime_positive_from / float(delta), 1e12, 4000)
        num = float_values(self.f, xs * float(delta), self.f.d + 1)
        den = float_values(self.f, xs, self.f.d + 1)
        return float(np.max(num / den))


def regularity(f: FunctionSpec) -> RegularityData:
    return RegularityData(f, f.n0, exact=f.kind == "pow")


__all__ = [
    "FunctionSpec",
    "RegularityData",
    "UnresolvedFloorError",
    "eval",
    "eval_interval",
    "exact_integer_check",
    "float_values",
    "floor_certified",
    "floor_f",
    "floors",
    "frac_f",
    "parse_function",
    "power",
    "regularity",
    "x2log",
    "x2loglog",
    "xlog",
    "xlogx",
]
