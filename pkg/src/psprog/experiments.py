"""Runnable experiments: densities, short intervals, variable r, gap lengths,
the alpha sweep and the x log x density band.

Counting always goes through exact floors (``functions.floors``) and the
vectorized membership mask, so every count is exact.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import functions as fn
from . import polytope as poly
from . import progressions as pg
from .exactmath import CertifiedReal, as_rational, falling_factorial
from .progressions import ProgressionQuery

CHUNK = 1 << 18


# ---------------------------------------------------------------------------
# reports


@dataclass
class DensityReport:
    query: ProgressionQuery
    grid: list
    counts: list
    densities: list  # Fractions count/N
    target: Optional[Fraction]
    bound_F: list = field(default_factory=list)
    start: int = 1

    def rows(self) -> list:
        out = []
        for i, N in enumerate(self.grid):
            row = {"N": N, "count": self.counts[i], "density": self.densities[i]}
            row["target"] = self.target
            row["deviation"] = None if self.target is None else float(abs(self.densities[i] - self.target))
            row["bound_F"] = self.bound_F[i] if self.bound_F else None
            out.append(row)
        return out

    def deviations(self) -> list:
        return [float(abs(dd - self.target)) for dd in self.densities]


@dataclass
class ShortIntervalReport:
    query: ProgressionQuery
    N: int
    L: int
    count: int
    density: Fraction
    target: Fraction
    bounds: dict  # case label -> value (only applicable cases)
    best_case: str
    best_value: float


@dataclass
class VariableRReport:
    alpha: Fraction
    k: int
    d: int
    N_grid: list
    pair_counts: list
    normalized: list
    A_tilde: float
    B_tilde: float
    C_kd: float
    N0: int
    K: float


@dataclass
class GapReport:
    alpha: Fraction
    k: int
    r: int
    x_grid: list
    L_values: list
    witnesses: list
    censored: list
    ratios: list
    ratios_k3: list
    appendix_lower: Optional[Fraction]
    caps: list


@dataclass
class SweepReport:
    k: int
    r: int
    N: int
    alpha_grid: list
    counts: list
    density_values: list  # Fractions

    def mean(self) -> float:
        return float(np.mean([float(v) for v in self.density_values]))


@dataclass
class BandReport:
    k: int
    r: int
    N_grid: list
    counts: list
    densities: list
    band_lower: CertifiedReal
    band_upper: CertifiedReal
    start: int

    def inside(self) -> list:
        return [self.band_lower.upper_q <= dd <= self.band_upper.lower_q for dd in self.densities]


# ---------------------------------------------------------------------------
# counting helpers


def count_mask(q: ProgressionQuery, start: int, stop: int, chunk: int = CHUNK) -> np.ndarray:
    """Membership mask for n in [start, stop), computed chunk by chunk."""
    parts = []
    for a in range(start, stop, chunk):
        parts.append(pg.brute_force_mask(q, a, min(stop, a + chunk)))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)


def counts_at(q: ProgressionQuery, grid: Sequence[int], start: Optional[int] = None) -> list:
    """#{n in [start, N] : test(n)} for every N in the grid (start defaults to max(1, n0))."""
    start = max(1, q.f.n0) if start is None else start
    grid = list(grid)
    if not grid:
        return []
    top = max(grid)
    if top < start:
        return [0] * len(grid)
    csum = np.cumsum(count_mask(q, start, top + 1), dtype=np.int64)
    return [int(csum[N - start]) if N >= start else 0 for N in grid]


def accelerated_count(q: ProgressionQuery, start: int, stop: int) -> tuple:
    """Count via the criterion first, brute force only on Uncertain verdicts.

    Starts whose eps is still >= 1/2 are brute forced as well. Returns
    (count, number of brute-force calls).
    """
    total = 0
    brute = 0
    for n in range(start, stop):
        try:
            out = pg.criterion_classify(q, n)
        except pg.BelowRegimeError:
            out = None
        if out is None or out.verdict == pg.UNCERTAIN:
            brute += 1
            total += pg.brute_force_test(q, n)
        else:
            total += out.verdict == pg.CERTAINLY_IN
    return total, brute


def limiting_density(q: ProgressionQuery) -> Optional[Fraction]:
    if not q.f.equidistributed:
        return None
    return poly.volume_exact(poly.build_C(q.k, q.d)).volume


def bound_F(alpha, N: int) -> float:
    """Convergence-rate shape F(N) for the fixed-r density of floor n^α, α in (1, 2)."""
    a = float(as_rational(alpha))
    if not 1 < a < 2:
        raise ValueError("bound_F needs alpha in (1, 2)")
    x = float(N)
    if a < 1.25:
        return x ** ((1 - a) / 2)
    if a < 11 / 6:
        return x ** ((a - 3) / 14) * math.sqrt(math.log(x))
    return x ** ((a - 2) / 6) * math.sqrt(math.log(x))


# ---------------------------------------------------------------------------
# fixed r


def density_fixed_r(q: ProgressionQuery, N_grid: Sequence[int], accelerate: bool = False) -> DensityReport:
    """Exact counts #{n in [start, N]} and densities count/N at every grid point."""
    grid = sorted(set(int(N) for N in N_grid))
    if not grid or grid[0] < 1:
        raise ValueError("N grid must contain positive integers")
    start = max(1, q.f.n0)
    if accelerate:
        counts = []
        running, prev = 0, start
        for N in grid:
            if N + 1 > prev:
                c, _ = accelerated_count(q, prev, N + 1)
                running += c
                prev = N + 1
            counts.append(running)
    else:
        counts = counts_at(q, grid, start)
    dens = [Fraction(c, N) for c, N in zip(counts, grid)]
    bF = []
    if q.f.kind == "pow" and q.d == 1 and 1 < q.f.alpha < 2:
        bF = [bound_F(q.f.alpha, N) for N in grid]
    return DensityReport(q, grid, counts, dens, limiting_density(q), bF, start)


def short_interval_bounds(alpha, N: int, L: int) -> dict:
    """The applicable cases of the short-interval deviation shape for α in (1, 2)."""
    a = float(as_rational(alpha))
    x, ll = float(N), float(L)
    lg = math.sqrt(math.log(x))
    out = {"case1": x ** ((a - 2) / 6) * lg + x ** ((2 - a) / 2) / math.sqrt(ll)}
    if a < 1.5:
        out["case2"] = x ** ((a - 3) / 14) * lg + x ** ((2 - a) / 2) / math.sqrt(ll)
    if 1.5 <= a < 11 / 6:
        out["case3"] = (x ** ((a - 3) / 14) + x ** ((3 - a) / 6) / math.sqrt(ll)) * lg
    return out


def density_short_interval(q: ProgressionQuery, N: int, L: int) -> ShortIntervalReport:
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if N < max(1, q.f.n0):
        raise ValueError(f"N={N} is below the domain start n0={q.f.n0}")
    if q.f.kind != "pow" or q.d != 1:
        raise ValueError("short-interval bounds are stated for pow:α with α in (1, 2)")
    count = int(np.count_nonzero(count_mask(q, N, N + L)))
    bounds = short_interval_bounds(q.f.alpha, N, L)
    best = min(bounds, key=bounds.get)
    return ShortIntervalReport(q, N, L, count, Fraction(count, L), limiting_density(q), bounds, best, bounds[best])


# ---------------------------------------------------------------------------
# variable r


def cutoff_constant(alpha, k: int, d: int) -> float:
    """K with R(x) = K x^{1 - α/(d+1)} for f = x^α and β = 2 (so c(1/2) = 2^{d+1-α})."""
    a = as_rational(alpha)
    ff = float(falling_factorial(a, d + 1))
    return (2.0 ** d * 2.0 ** float(d + 1 - a) / (k - d - 1)) ** (1 / (d + 1)) * ff ** (-1 / (d + 1))


def cutoff_start(alpha, k: int, d: int) -> int:
    """Smallest N0 >= 2 with 1 + (k-1) R(x)/x < 2 for all x >= N0."""
    a = float(as_rational(alpha))
    K = cutoff_constant(alpha, k, d)
    thr = ((k - 1) * K * (1 + 1e-9)) ** ((d + 1) / a)
    return max(2, math.floor(thr) + 1)


def _pair_count(alpha: Fraction, k: int, d: int, N: int, prune: bool) -> int:
    f = fn.power(alpha, d)
    F = np.concatenate([[0], fn.floors(f, 1, N + 1)])  # F[n] = floor(n^α)
    rmax_all = (N - 1) // (k - 1)
    if rmax_all < 1:
        return 0
    if prune:
        K = cutoff_constant(alpha, k, d)
        N0 = min(cutoff_start(alpha, k, d), N + 1)
        expo = 1 - float(alpha) / (d + 1)
        n = np.arange(N + 1, dtype=np.float64)
        # r < R(n) for n >= N0; an upward margin keeps the float cutoff safe
        allowed = np.floor(K * np.power(np.maximum(n, 1.0), expo) * (1 + 1e-9) + 1e-9).astype(np.int64)
        allowed[:N0] = 0
        r_top = min(int(allowed.max()), rmax_all)
    else:
        N0 = 1
        allowed = None
        r_top = rmax_all
    total = 0
    # starts below N0 carry no cutoff: test every r for them, vectorized over r
    for n0 in range(1, N0):
        r = np.arange(1, (N - n0) // (k - 1) + 1)
        if r.size == 0:
            continue
        V = np.stack([F[n0 + j * r] for j in range(k)])
        ok = np.all(V[1:] > V[:-1], axis=0)
        D = np.diff(V, n=d, axis=0)
        total += int(np.count_nonzero(ok & np.all(D == D[0], axis=0)))
    for r in range(1, r_top + 1):
        M = N - (k - 1) * r  # starts n = N0..M
        if M < N0:
            break
        V = np.stack([F[N0 + j * r: 1 + j * r + M] for j in range(k)])
        ok = np.all(V[1:] > V[:-1], axis=0)
        D = np.diff(V, n=d, axis=0)
        ok &= np.all(D == D[0], axis=0)
        if allowed is not None:
            ok &= allowed[N0:M + 1] >= r
        total += int(np.count_nonzero(ok))
    return total


def pair_count(alpha, k: int, d: int, N: int, prune: bool = True) -> int:
    """#{(n, r) : n >= 1, r >= 1, n + (k-1) r <= N, floors in P_{k,d}}.

    These pairs are in bijection with k-term APs P in [1, N]. With
    ``prune`` only r < R(n) is tested past the cutoff start N0, which the
    r-bound argument shows loses nothing.
    """
    a = as_rational(alpha)
    if not d < a < d + 1:
        raise ValueError(f"alpha must lie in (d, d+1) = ({d}, {d + 1})")
    if k < d + 2:
        raise ValueError(f"k must be >= d+2 (k={k}, d={d})")
    return _pair_count(a, k, d, N, prune)


def sup_Cminus_constant(k: int, d: int, grid: int = 64, refine: int = 40) -> float:
    """C_{k,d} = sup_{0<x<1} vol(C^-(x)) x^{1/(d+1)} with the one-sided C^-.

    Exact volumes on a grid, then a golden-section refinement around the
    best grid point. The result is a value attained at some x, so it never
    exceeds the true supremum.
    """
    def g(x: Fraction) -> float:
        v = poly.volume_exact(poly.band_polytope(k, d, 0, 1 - x)).volume
        return float(v) * float(x) ** (1 / (d + 1))

    xs = [Fraction(i, grid) for i in range(1, grid)]
    vals = [g(x) for x in xs]
    i = int(np.argmax(vals))
    lo = xs[max(0, i - 1)] if i > 0 else Fraction(1, 4 * grid)
    hi = xs[min(len(xs) - 1, i + 1)]
    best = vals[i]
    phi = Fraction(618034, 1000000)
    a, b = lo, hi
    c1, c2 = b - phi * (b - a), a + phi * (b - a)
    g1, g2 = g(c1), g(c2)
    for _ in range(refine):
        if g1 > g2:
            b, c2, g2 = c2, c1, g1
            c1 = b - phi * (b - a)
            c1 = Fraction(c1).limit_denominator(10 ** 9)
            g1 = g(c1)
        else:
            a, c1, g1 = c1, c2, g2
            c2 = a + phi * (b - a)
            c2 = Fraction(c2).limit_denominator(10 ** 9)
            g2 = g(c2)
        best = max(best, g1, g2)
    return best


def A_tilde(alpha, k: int, d: int) -> tuple:
    """(Ã, C_{k,d}): lower window constant of the variable-r count."""
    a = as_rational(alpha)
    C = sup_Cminus_constant(k, d)
    ff = float(falling_factorial(a, d + 1))
    val = C * (math.factorial(d + 1) / ff) ** (1 / (d + 1)) / (2 - float(a) / (d + 1))
    return val, C


def B_tilde(alpha, k: int, d: int) -> float:
    a = as_rational(alpha)
    ff = float(falling_factorial(a, d + 1))
    return (2.0 ** d / (ff * (k - d - 1))) ** (1 / (d + 1)) / (2 - float(a) / (d + 1))


def count_variable_r(alpha, k: int, d: int, N_grid: Sequence[int]) -> VariableRReport:
    a = as_rational(alpha)
    grid = sorted(set(int(N) for N in N_grid))
    counts = [pair_count(a, k, d, N, prune=True) for N in grid]
    expo = 2 - float(a) / (d + 1)
    norm = [c / N ** expo for c, N in zip(counts, grid)]
    At, C = A_tilde(a, k, d)
    return VariableRReport(a, k, d, grid, counts, norm, At, B_tilde(a, k, d), C,
                           cutoff_start(a, k, d), cutoff_constant(a, k, d))


# ---------------------------------------------------------------------------
# gaps


def gap_cap(alpha, k: int, r: int, x: int) -> int:
    """Scan cap: ten times a full sweep of {r f'} across the k-1 offsets."""
    a = float(as_rational(alpha))
    return max(1000, math.ceil(10 * (k - 1) ** 2 * r * x ** (2 - a) / (a * (a - 1))))


def gap_length(q: ProgressionQuery, x: int, cap: int) -> tuple:
    """(L, witness, censored): first n >= x passing the test, scanning at most cap+1 starts."""
    pos = x
    step = 256
    end = x + cap + 1
    while pos < end:
        stop = min(end, pos + step)
        mask = pg.brute_force_mask(q, pos, stop)
        hit = np.flatnonzero(mask)
        if hit.size:
            n = pos + int(hit[0])
            return n - x, n, False
        pos = stop
        step = min(step * 4, 1 << 18)
    return cap, None, True


def gap_lengths(alpha, k: int, r: int, x_grid: Sequence[int]) -> GapReport:
    a = as_rational(alpha)
    if not 1 < a < 2:
        raise ValueError("gap lengths need alpha in (1, 2)")
    if k < 3:
        raise ValueError("gap lengths need k >= 3")
    q = ProgressionQuery(k, 1, r, fn.power(a))
    Ls, wit, cens, ratios, r3, caps = [], [], [], [], [], []
    for x in x_grid:
        x = int(x)
        cap = gap_cap(a, k, r, x)
        L, w, c = gap_length(q, x, cap)
        Ls.append(L)
        wit.append(w)
        cens.append(c)
        caps.append(cap)
        ratios.append(L / x ** (2 - float(a)))
        r3.append(L / x ** (1 - float(a) / 2))
    lower = Fraction(k - 3) / (a * (a - 1) * r * (k - 1)) if k >= 4 else None
    return GapReport(a, k, r, [int(x) for x in x_grid], Ls, wit, cens, ratios, r3, lower, caps)


def gap_bound_constant(alpha, r: int) -> Fraction:
    """Recorded bound for max L/x^{2-α}: 2/(α(α-1)r), two full sweeps of {r f'}."""
    a = as_rational(alpha)
    return Fraction(2) / (a * (a - 1) * r)


def all_gap_lengths(alpha, k: int, r: int, M: int) -> np.ndarray:
    """L(N) for every N in [1, M] (index 0 unused), via next-hit indices."""
    q = ProgressionQuery(k, 1, r, fn.power(alpha))
    extra = max(1000, M // 10)
    while True:
        mask = count_mask(q, 1, M + extra + 1)
        hits = np.flatnonzero(mask) + 1
        if hits.size and hits[-1] >= M:
            break
        extra *= 2
    idx = np.searchsorted(hits, np.arange(1, M + 1))
    L = np.empty(M + 1, dtype=np.int64)
    L[0] = 0
    L[1:] = hits[idx] - np.arange(1, M + 1)
    return L


def k3_dense_fraction(alpha, r: int, M: int) -> float:
    """Fraction of N <= M with L(N) <= N^{1-α/2} log N (k = 3)."""
    L = all_gap_lengths(alpha, 3, r, M)
    N = np.arange(1, M + 1, dtype=np.float64)
    thr = N ** (1 - float(as_rational(alpha)) / 2) * np.log(N)
    return float(np.mean(L[1:] <= thr))


# ---------------------------------------------------------------------------
# alpha sweep


def parse_alpha_grid(text: str) -> list:
    """``1+i/1000,i=1..999`` or a comma list such as ``3/2,1.25``."""
    text = text.replace(" ", "")
    if ",i=" in text:
        expr, _, rng = text.partition(",i=")
        lo, _, hi = rng.partition("..")
        base, _, frac = expr.partition("+")
        num, _, den = frac.partition("/")
        if num != "i" or not den:
            raise ValueError(f"alpha grid expression must look like 1+i/1000, got {expr!r}")
        b, dd = as_rational(base), int(den)
        return [b + Fraction(i, dd) for i in range(int(lo), int(hi) + 1)]
    return [as_rational(t) for t in text.split(",") if t]


def _sweep_one(args) -> int:
    alpha, k, r, N = args
    q = ProgressionQuery(k, 1, r, fn.power(alpha))
    return int(np.count_nonzero(pg.brute_force_mask(q, 1, N + 1)))


def alpha_sweep(k: int, r: int, N: int, alpha_grid: Sequence, threads: int = 1) -> SweepReport:
    grid = [as_rational(a) for a in alpha_grid]
    if any(not 1 < a < 2 for a in grid):
        raise ValueError("alpha grid must lie strictly inside (1, 2)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha grid must be strictly increasing")
    work = [(a, k, r, N) for a in grid]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            counts = list(ex.map(_sweep_one, work, chunksize=max(1, len(work) // (4 * threads))))
    else:
        counts = [_sweep_one(w) for w in work]
    return SweepReport(k, r, N, grid, counts, [Fraction(c, N) for c in counts])


def default_threads() -> int:
    env = os.environ.get("PSPROG_THREADS")
    if env:
        return max(1, int(env))
    return 1


# ---------------------------------------------------------------------------
# x log x band


def xlogx_band_limits(k: int, r: int, bits: int = 128) -> tuple:
    """Certified enclosures of 1/((e^{1/r}-1) r (k-1)) and e^{1/r}/((e^{1/r}-1) r (k-1))."""
    e = CertifiedReal.exact(Fraction(1, r), bits).exp()
    den = (e - 1) * (r * (k - 1))
    return 1 / den, e / den


def xlogx_band(k: int, r: int, N_grid: Sequence[int]) -> BandReport:
    f = fn.xlogx()
    q = ProgressionQuery(k, 1, r, f)
    grid = sorted(set(int(N) for N in N_grid))
    counts = counts_at(q, grid)
    dens = [Fraction(c, N) for c, N in zip(counts, grid)]
    lo, hi = xlogx_band_limits(k, r)
    return BandReport(k, r, grid, counts, dens, lo, hi, q.f.n0)


