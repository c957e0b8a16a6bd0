"""Polynomial progressions P_{k,d}: membership, Taylor vectors and the
polytope criterion.

For f with f^{(d+1)} > 0 Taylor's formula gives

    f(n + r j) = sum_i C(j, i) a_i(n) + R_j,   0 <= R_j <= eps_j,

with a_i(n) = sum_{l=i}^{d} r^l / l! f^{(l)}(n) S(l, i) i!. Writing
y_i = {a_i} + s_i for integer shifts s, the floors (floor f(n+rj))_j lie in
P_{k,d} exactly when some shift puts every S_j = sum_i C(j,i) y_i + R_j in
[0, 1). The classifier decides this from enclosures without computing the
floors themselves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from gmpy2 import mpq

from . import functions as fn
from .exactmath import START_BITS, CertifiedReal, binomial, stirling2
from .functions import FunctionSpec

CERTAINLY_IN = "CertainlyIn"
CERTAINLY_OUT = "CertainlyOut"
UNCERTAIN = "Uncertain"

# extra precision levels tried when a face comparison straddles its boundary
RETRY_BITS = (256, 1024)


class BelowRegimeError(ValueError):
    """eps(n) >= 1/2: the criterion is not applicable this early."""


@dataclass(frozen=True)
class ProgressionQuery:
    k: int
    d: int
    r: int
    f: FunctionSpec

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.k < self.d + 2:
            raise ValueError(f"k must be >= d+2 (k={self.k}, d={self.d})")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.f.d != self.d:
            raise ValueError(f"d={self.d} does not match the degree d={self.f.d} of {self.f.label}")

    @property
    def span(self) -> int:
        return self.r * (self.k - 1)

    def to_dict(self) -> dict:
        return {"f": self.f.label, "k": self.k, "d": self.d, "r": self.r}


@dataclass(frozen=True)
class MembershipResult:
    in_Pkd: bool
    newton_coeffs: Optional[tuple] = None


@dataclass(frozen=True)
class TaylorVector:
    n: int
    a: tuple  # CertifiedReal a_0 .. a_d
    eps: CertifiedReal  # enclosure of (r(k-1))^{d+1}/(d+1)! f^{(d+1)}(n)
    eps_offsets: tuple  # per-j enclosures of (rj)^{d+1}/(d+1)! f^{(d+1)}(n)


@dataclass(frozen=True)
class CriterionOutcome:
    verdict: str
    shift: Optional[tuple] = None
    eps_used: Optional[Fraction] = None


# ---------------------------------------------------------------------------
# sequences


def diff(seq: Sequence[int], r_step: int, order: int) -> list:
    """Apply Δ_{r_step} ``order`` times: (Δ a)(n) = a(n + r_step) - a(n)."""
    if r_step < 1 or order < 1:
        raise ValueError("r_step and order must be positive")
    out = list(seq)
    if len(out) <= r_step * order:
        raise ValueError(f"sequence of length {len(out)} is too short for {order} differences of step {r_step}")
    for _ in range(order):
        out = [out[i + r_step] - out[i] for i in range(len(out) - r_step)]
    return out


def is_in_Pkd(seq: Sequence[int], d: int, k: Optional[int] = None) -> MembershipResult:
    """Strictly increasing and with constant d-th differences.

    On success returns the Newton coefficients Δ^i a(0), i = 0..d, so that
    a(j) = sum_i C(j, i) Δ^i a(0).
    """
    seq = [int(v) for v in seq]
    if k is not None and len(seq) != k:
        raise ValueError(f"expected a sequence of length k={k}, got {len(seq)}")
    if len(seq) < d + 2:
        raise ValueError(f"need k >= d+2 terms (got {len(seq)} terms, d={d})")
    if any(b <= a for a, b in zip(seq, seq[1:])):
        return MembershipResult(False)
    rows = [seq]
    for _ in range(d):
        prev = rows[-1]
        rows.append([prev[i + 1] - prev[i] for i in range(len(prev) - 1)])
    if len(set(rows[-1])) != 1:
        return MembershipResult(False)
    return MembershipResult(True, tuple(row[0] for row in rows))


def newton_eval(coeffs: Sequence[int], j: int) -> int:
    return sum(c * binomial(j, i) for i, c in enumerate(coeffs))


def progression_floors(q: ProgressionQuery, n: int) -> list:
    return [fn.floor_f(q.f, n + q.r * j) for j in range(q.k)]


def brute_force_test(q: ProgressionQuery, n: int) -> bool:
    """Exact test of (floor f(n + r j))_{j<k} in P_{k,d}."""
    if n < q.f.n0:
        raise ValueError(f"n={n} is below the domain start n0={q.f.n0}")
    return is_in_Pkd(progression_floors(q, n), q.d).in_Pkd


def mask_from_floors(F: np.ndarray, k: int, d: int, r: int) -> np.ndarray:
    """Membership mask for starts 0..len(F)-r(k-1)-1 of an exact floor array."""
    M = len(F) - r * (k - 1)
    if M <= 0:
        return np.zeros(0, dtype=bool)
    V = np.stack([F[j * r: j * r + M] for j in range(k)])
    ok = np.all(V[1:] > V[:-1], axis=0)
    D = np.diff(V, n=d, axis=0)
    ok &= np.all(D == D[0], axis=0)
    return ok


def brute_force_mask(q: ProgressionQuery, start: int, stop: int) -> np.ndarray:
    """Vectorized brute_force_test for every n in [start, stop)."""
    if start < q.f.n0:
        raise ValueError(f"start={start} is below the domain start n0={q.f.n0}")
    if stop <= start:
        return np.zeros(0, dtype=bool)
    F = fn.floors(q.f, start, stop + q.span)
    return mask_from_floors(F, q.k, q.d, q.r)


# ---------------------------------------------------------------------------
# Taylor vector


@lru_cache(maxsize=None)
def taylor_matrix(d: int, r: int) -> tuple:
    """Rows l, columns i: r^l / l! * S(l, i) * i!, so a = (f, f', ..., f^{(d)}) A."""
    return tuple(
        tuple(Fraction(r ** l * stirling2(l, i) * math.factorial(i), math.factorial(l)) if i <= l else Fraction(0)
              for i in range(d + 1))
        for l in range(d + 1)
    )


def taylor_vector(q: ProgressionQuery, n: int, bits: int = START_BITS) -> TaylorVector:
    if n < q.f.n0:
        raise ValueError(f"n={n} is below the domain start n0={q.f.n0}")
    d = q.d
    derivs = [fn.eval(q.f, l, n, bits) for l in range(d + 2)]
    A = taylor_matrix(d, q.r)
    a = []
    for i in range(d + 1):
        acc = derivs[i] * A[i][i]
        for l in range(i + 1, d + 1):
            acc = acc + derivs[l] * A[l][i]
        a.append(acc)
    top = derivs[d + 1]
    fact = math.factorial(d + 1)
    offsets = tuple(top * Fraction((q.r * j) ** (d + 1), fact) for j in range(q.k))
    return TaylorVector(n, tuple(a), offsets[-1], offsets)


# ---------------------------------------------------------------------------
# classifier


@lru_cache(maxsize=None)
def _plus_box(k: int, d: int) -> tuple:
    """Bounding box of C^+(1/2), used to bound the shift search."""
    from .polytope import band_polytope, vertices

    verts = vertices(band_polytope(k, d, Fraction(-1, 2), Fraction(3, 2)))
    lo = tuple(min(v[i] for v in verts) for i in range(d + 1))
    hi = tuple(max(v[i] for v in verts) for i in range(d + 1))
    return lo, hi


def shift_box(k: int, d: int) -> list:
    """Candidate shifts s_i (i = 1..d) for y_i = {a_i} + s_i with y in C^+(eps), eps < 1/2."""
    lo, hi = _plus_box(k, d)
    return [range(math.ceil(lo[i]) - 1, math.floor(hi[i]) + 1) for i in range(1, d + 1)]


def _q(x) -> mpq:
    n, dd = x.as_integer_ratio()
    return mpq(int(n), int(dd))


def _evaluate(q: ProgressionQuery, tv: TaylorVector, variant: str):
    """Scan all candidate shifts once.

    Returns (shifts certainly in C^-, every shift certainly outside C^+,
    some face comparison straddled its boundary).
    """
    d, k = q.d, q.k
    lo = [_q(a.lower) for a in tv.a]
    hi = [_q(a.upper) for a in tv.a]
    base = [int(math.floor(x)) for x in lo]
    ylo = [lo[i] - base[i] for i in range(d + 1)]
    yhi = [hi[i] - base[i] for i in range(d + 1)]
    if variant == "offset":
        eps_j = [_q(e.upper) for e in tv.eps_offsets]
    else:
        e = _q(tv.eps.upper)
        eps_j = [mpq(0)] + [e] * (k - 1)
    B = _binomial_rows(k, d)
    plo, phi = _plus_box(k, d)
    # y_i + s_i must land in the bounding box of C^+(1/2)
    ranges = [range(math.ceil(plo[i] - yhi[i]), math.floor(phi[i] - ylo[i]) + 1) for i in range(d + 1)]

    inside = []
    all_out = True
    straddle = False
    for s in itertools.product(*ranges):
        is_in = True
        is_out = False
        for j in range(k):
            Sl = Su = mpq(0)
            for i, c in B[j]:
                Sl += c * (ylo[i] + s[i])
                Su += c * (yhi[i] + s[i])
            e = eps_j[j]
            # one-sided C^+: -eps <= S_j < 1
            if Su < -e or Sl >= 1:
                is_out = True
                break
            if Sl < -e <= Su or Sl < 1 <= Su:
                straddle = True
            # one-sided C^-: 0 <= S_j < 1 - eps
            if not (Sl >= 0 and Su + e < 1):
                is_in = False
                if Sl < 0 <= Su or Sl + e < 1 <= Su + e:
                    straddle = True
        if is_out:
            continue
        all_out = False
        if is_in:
            inside.append(tuple(int(x) for x in s))
    return inside, all_out, straddle


@lru_cache(maxsize=None)
def _binomial_rows(k: int, d: int) -> tuple:
    return tuple(tuple((i, binomial(j, i)) for i in range(d + 1) if binomial(j, i)) for j in range(k))


def criterion_classify(q: ProgressionQuery, n: int, bits: int = START_BITS,
                       variant: str = "uniform") -> CriterionOutcome:
    """CertainlyIn / CertainlyOut / Uncertain for the start n.

    ``variant`` selects the remainder bound: "uniform" uses eps(n) for every
    offset j >= 1; "offset" uses (rj)^{d+1}/(d+1)! f^{(d+1)}(n) per offset j.
    Both are sound because 0 <= R_j <= that bound. The returned shift is
    (s_1, ..., s_d) relative to the integer parts of a_1, ..., a_d.
    """
    if variant not in ("uniform", "offset"):
        raise ValueError(f"unknown criterion variant {variant!r}")
    tv = taylor_vector(q, n, bits)
    eps_up = Fraction(*(int(t) for t in tv.eps.upper.as_integer_ratio()))
    if eps_up >= Fraction(1, 2):
        raise BelowRegimeError(f"eps({n}) = {float(eps_up):.4g} >= 1/2; n is below the asymptotic regime")
    schedule = [b for b in RETRY_BITS if b > bits]
    while True:
        inside, all_out, straddle = _evaluate(q, tv, variant)
        if len(inside) > 1:
            raise AssertionError(f"shifts {inside} all certify membership at n={n}; C^- copies overlap")
        if inside:
            s = inside[0]
            if s[0] != 0:
                raise AssertionError(f"nonzero s_0 accepted at n={n}")
            return CriterionOutcome(CERTAINLY_IN, s[1:], eps_up)
        if all_out:
            return CriterionOutcome(CERTAINLY_OUT, None, eps_up)
        if not straddle or not schedule:
            return CriterionOutcome(UNCERTAIN, None, eps_up)
        tv = taylor_vector(q, n, schedule.pop(0))
