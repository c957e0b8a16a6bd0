"""Discrepancy of the orbit ({f(n)}, {r f'(n)}) in the unit square.

Extreme discrepancy here is the sup over half-open boxes [a,b) x [c,d) of
|count/L - area|. The sup of count/L - area is approached by closed boxes
with sides through point coordinates, and the sup of area - count/L by open
boxes with sides through point coordinates or 0/1, so both one-sided sups
are maxima over finitely many boxes. The exact algorithm evaluates all of
them in O(L^3) with a running-minimum scan over the y side.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import functions as fn
from .exactmath import START_BITS, CertifiedReal, certify_floor, integer_root
from .functions import FunctionSpec

EXACT_CAP = 2048
DEFAULT_GRID = 512
# admissible constant in D <= C (1/H + sum_h |S(h)|/u(h)) for d = 2:
# Koksma-Szusz with (3/2)^d (2/(H+1) + ...) gives C = 2 (3/2)^2 = 9/2
C_ETK = 4.5
_U = 2.0 ** -53


class DiscrepancySizeError(ValueError):
    pass


@dataclass(frozen=True)
class PointSet2D:
    points: tuple  # pairs of CertifiedReal fractional parts
    source: tuple = ()  # (f label, r, N, L)

    @property
    def xy(self) -> np.ndarray:
        return np.array([[p[0].mid, p[1].mid] for p in self.points], dtype=np.float64).reshape(-1, 2)

    @property
    def coord_error(self) -> float:
        """Max distance between a stored float coordinate and the true value."""
        w = 0.0
        for p in self.points:
            for c in p:
                w = max(w, float(c.width))
        return w + _U

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class DiscrepancyValue:
    value: float
    mode: str
    error_radius: float

    def to_dict(self) -> dict:
        return {"value": self.value, "mode": self.mode, "error_radius": self.error_radius}


@dataclass
class DiscrepancyReport:
    alpha: Fraction
    r: int
    N: int
    L: int
    D: DiscrepancyValue
    etk_H: int
    etk_value: float
    etk_radius: float
    theory_case: str
    theory_value: float
    isotropic: float

    def to_dict(self) -> dict:
        from .exactmath import format_rational

        return {
            "L": self.L,
            "N": self.N,
            "alpha": format_rational(self.alpha),
            "r": self.r,
            "D": self.D.to_dict(),
            "etk": {"H": self.etk_H, "value": self.etk_value, "error_radius": self.etk_radius,
                    "C_etk": C_ETK},
            "theory": {"case": self.theory_case, "value": self.theory_value},
            "isotropic": self.isotropic,
        }


# ---------------------------------------------------------------------------
# orbit


def _frac_scaled_derivative(f: FunctionSpec, r: int, n: int, bits: int) -> CertifiedReal:
    """Enclosure of {r f'(n)}, exact when r f'(n) is rational for pow."""
    if f.kind == "pow":
        a = f.alpha
        p, q = (a - 1).numerator, (a - 1).denominator
        root, exact = integer_root(n ** p, q)
        if exact:
            v = r * a * root
            return CertifiedReal.exact(v - math.floor(v), bits)
    val = fn.eval(f, 1, n, bits) * r
    m = certify_floor(val)
    return val - m


def orbit(f: FunctionSpec, r: int, N: int, L: int, bits: int = START_BITS) -> PointSet2D:
    """Fractional parts of (f(n), r f'(n)) for n in [N, N+L)."""
    if f.kind != "pow":
        raise ValueError("the discrepancy orbit is defined for pow:α")
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if N < f.n0:
        raise ValueError(f"N={N} is below the domain start n0={f.n0}")
    pts = []
    for n in range(N, N + L):
        pts.append((fn.frac_f(f, n, bits), _frac_scaled_derivative(f, r, n, bits)))
    return PointSet2D(tuple(pts), (f.label, r, N, L))


def points_from_array(xy: np.ndarray) -> PointSet2D:
    """Wrap raw coordinates in [0,1)^2 (tests and corpora) as exact enclosures."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    if np.any(xy < 0) or np.any(xy >= 1):
        raise ValueError("points must lie in [0, 1)^2")
    pts = tuple((CertifiedReal.exact(Fraction(float(x))), CertifiedReal.exact(Fraction(float(y)))) for x, y in xy)
    return PointSet2D(pts, ())


# ---------------------------------------------------------------------------
# exact extreme discrepancy


def _box_scan(xs: np.ndarray, ys: np.ndarray, Vx: np.ndarray, Vy: np.ndarray, L: int) -> float:
    """max over candidate boxes of count/L - area (closed) and area - count/L (open).

    Vx, Vy are sorted candidate coordinates; the points are given by their
    rank positions xs, ys into Vx, Vy.
    """
    nx, ny = len(Vx), len(Vy)
    # grid[i, t] = number of points with x-rank i and y-rank t
    grid = np.zeros((nx, ny), dtype=np.int64)
    np.add.at(grid, (xs, ys), 1)
    # le[i, t] = #(x-rank i, y-rank <= t); lt the same with y-rank < t
    le_y = np.cumsum(grid, axis=1)
    lt_y = le_y - grid
    # prefix sums over x, scaled by 1/L (integers below 2^53, one rounding each)
    P_le = np.zeros((nx + 1, ny))
    P_lt = np.zeros((nx + 1, ny))
    np.cumsum(le_y, axis=0, out=P_le[1:])
    np.cumsum(lt_y, axis=0, out=P_lt[1:])
    P_le /= L
    P_lt /= L
    best = 0.0
    A = np.empty((nx, ny))
    B = np.empty((nx, ny))
    W = np.empty((nx, ny))
    for p in range(nx):
        m = nx - p
        a, b, w = A[:m], B[:m], W[:m]
        # closed boxes [Vx[p], Vx[q]] x [Vy[s], Vy[t]], q >= p, s <= t:
        # count/L - area = (le[t] - w Vy[t]) - (lt[s] - w Vy[s])
        np.multiply.outer(Vx[p:] - Vx[p], Vy, out=w)
        np.subtract(P_le[p + 1:], P_le[p], out=a)
        a -= w
        np.subtract(P_lt[p + 1:], P_lt[p], out=b)
        b -= w
        np.minimum.accumulate(b, axis=1, out=b)
        a -= b
        best = max(best, float(a.max()))
        # open boxes (Vx[p], Vx[q]) x (Vy[s], Vy[t]), q > p, s < t, rows p+1..q-1:
        # area - count/L = (w Vy[t] - lt[t]) - (w Vy[s] - le[s])
        if m > 1:
            a, b, w = A[:m - 1], B[:m - 1], W[1:m]
            np.subtract(P_lt[p + 1:-1], P_lt[p + 1], out=a)
            np.subtract(w, a, out=a)
            np.subtract(P_le[p + 1:-1], P_le[p + 1], out=b)
            np.subtract(w, b, out=b)
            np.minimum.accumulate(b, axis=1, out=b)
            best = max(best, float((a[:, 1:] - b[:, :-1]).max()))
    return best


def _ranks(vals: np.ndarray) -> tuple:
    V = np.unique(np.concatenate([vals, [0.0, 1.0]]))
    return np.searchsorted(V, vals), V


def extreme_discrepancy_array(xy: np.ndarray) -> float:
    """Exact extreme discrepancy of points given as floats in [0,1)^2."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    L = len(xy)
    if L == 0:
        return 0.0
    xs, Vx = _ranks(xy[:, 0])
    ys, Vy = _ranks(xy[:, 1])
    return min(1.0, _box_scan(xs, ys, Vx, Vy, L))


def grid_discrepancy(xy: np.ndarray, G: int) -> float:
    """Discrepancy over half-open boxes with corners on the 1/G grid."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    L = len(xy)
    cx = np.minimum(np.floor(xy[:, 0] * G).astype(np.int64), G - 1)
    cy = np.minimum(np.floor(xy[:, 1] * G).astype(np.int64), G - 1)
    counts = np.zeros((G, G), dtype=np.int64)
    np.add.at(counts, (cx, cy), 1)
    # half-open grid boxes [i/G, j/G) x [s/G, t/G): 2-D prefix sums
    P = np.zeros((G + 1, G + 1), dtype=np.int64)
    P[1:, 1:] = np.cumsum(np.cumsum(counts, axis=0), axis=1)
    V = np.arange(G + 1) / G
    best = 0.0
    invL = 1.0 / L
    for i in range(G):
        strip = (P[i + 1:] - P[i]) * invL  # rows j = i+1..G, cols t = 0..G
        w = (V[i + 1:] - V[i])[:, None]
        a = strip - w * V[None, :]
        # max_{s<t} a[t] - a[s] and max_{s<t} a[s] - a[t]
        amin = np.minimum.accumulate(a, axis=1)
        amax = np.maximum.accumulate(a, axis=1)
        best = max(best, float(np.max(a[:, 1:] - amin[:, :-1])), float(np.max(amax[:, :-1] - a[:, 1:])))
    return best


def extreme_discrepancy(ps: PointSet2D, mode: str = "exact", G: int = DEFAULT_GRID) -> DiscrepancyValue:
    """Exact (L <= 2048) or grid-mode extreme discrepancy with an error radius."""
    xy = ps.xy
    L = len(xy)
    delta = ps.coord_error
    if mode == "exact":
        if L > EXACT_CAP:
            raise DiscrepancySizeError(f"exact mode is capped at L={EXACT_CAP} points (got {L}); use grid mode")
        # moving every point by at most delta changes D by at most 4 delta
        return DiscrepancyValue(extreme_discrepancy_array(xy), "exact", 4 * delta + 8 * _U)
    if mode != "grid":
        raise ValueError(f"unknown discrepancy mode {mode!r}")
    val = grid_discrepancy(xy, G)
    # points within delta of a grid line may sit in the neighbouring cell
    gx = xy * G
    amb = np.any(np.abs(gx - np.round(gx)) <= delta * G + 1e-12, axis=1)
    ambiguous = int(np.count_nonzero(amb & (np.round(gx) > 0).all(axis=1)))
    radius = 4.0 / G + 4.0 / G ** 2 + 2.0 * ambiguous / L
    return DiscrepancyValue(val, f"grid({G})", radius)


def naive_discrepancy(xy: np.ndarray, eta: float = 1e-12) -> float:
    """Independent oracle: direct point counts in every candidate half-open box.

    Candidate endpoints are 0, 1, every coordinate, and every coordinate
    plus eta, giving O(L^4) boxes; the counts for all y-intervals of one
    x-interval are taken together from membership indicators.
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    L = len(xy)
    if L == 0:
        return 0.0
    cx = np.array(sorted(set([0.0, 1.0] + list(xy[:, 0]) + [min(1.0, x + eta) for x in xy[:, 0]])))
    cy = np.array(sorted(set([0.0, 1.0] + list(xy[:, 1]) + [min(1.0, y + eta) for y in xy[:, 1]])))
    X, Y = xy[:, 0], xy[:, 1]
    below = (Y[None, :] < cy[:, None]).astype(np.int64)  # below[c, n] = [y_n < cy[c]]
    iu, ju = np.triu_indices(len(cy), k=1)
    dy = cy[ju] - cy[iu]
    best = 0.0
    for a, b in itertools.combinations(range(len(cx)), 2):
        inx = ((X >= cx[a]) & (X < cx[b])).astype(np.int64)
        cnt = below @ inx  # points of the x-strip with y below each candidate
        box = (cnt[ju] - cnt[iu]) / L  # y in [cy[i], cy[j])
        best = max(best, float(np.max(np.abs(box - (cx[b] - cx[a]) * dy))))
    return best


# ---------------------------------------------------------------------------
# ETK bound


def etk_bound(ps: PointSet2D, H: int) -> tuple:
    """(value, error radius) of 1/H + sum_{0<|h|_inf<=H} |S(h)| / u(h).

    S(h) = (1/L) sum_n e(h0 x_n + h1 y_n) is formed as a product of the two
    coordinate character tables. The radius bounds the float64 error of the
    whole expression; a BLAS dot product has summation error far below
    L 2^-46, so no compensated accumulation is needed.
    """
    if H < 1:
        raise ValueError(f"H must be >= 1, got {H}")
    xy = ps.xy
    L = len(xy)
    h = np.arange(-H, H + 1)
    E0 = np.exp(2j * np.pi * np.outer(h, xy[:, 0]))
    E1 = np.exp(2j * np.pi * np.outer(h, xy[:, 1]))
    S = np.abs(E0 @ E1.T) / L
    u = np.outer(np.maximum(1, np.abs(h)), np.maximum(1, np.abs(h))).astype(np.float64)
    W = 1.0 / u
    W[H, H] = 0.0
    value = 1.0 / H + float(np.sum(W * S))
    hh = np.abs(h)[:, None] + np.abs(h)[None, :]
    # per normalized sum: L 2^-46 / L for the float evaluation plus the
    # phase error 2 pi |h|_1 delta from the coordinates themselves
    per_sum = 2.0 ** -46 + 2 * np.pi * hh * ps.coord_error
    radius = float(np.sum(W * per_sum)) + 4 * _U * value
    return value, radius


# ---------------------------------------------------------------------------
# theory


def theory_bound(alpha, r: int, N: int, L: int) -> dict:
    """All applicable case values of the discrepancy shape plus the minimum."""
    a = float(Fraction(alpha) if not isinstance(alpha, float) else alpha)
    if not 1 < a < 2:
        raise ValueError("theory_bound needs alpha in (1, 2)")
    x, ll = float(N), float(L)
    lg = math.log(x)
    cases = {"case1": x ** ((a - 2) / 3) * lg + x ** (2 - a) / ll}
    if a < 1.5:
        cases["case2"] = x ** ((a - 3) / 7) * lg + x ** (2 - a) / ll
    if 1.5 <= a < 11 / 6:
        cases["case3"] = (x ** ((a - 3) / 7) + x ** ((3 - a) / 3) / ll) * lg
    best = min(cases, key=cases.get)
    return {"cases": cases, "case": best, "value": cases[best], "L_over_N": ll / x}


def isotropic_bound(D: float, d: int) -> float:
    if not 0 <= D <= 1:
        raise ValueError("D must lie in [0, 1]")
    if d < 1:
        raise ValueError("d must be >= 1")
    return (4 * d * math.sqrt(d) + 1) * D ** (1 / d)


# ---------------------------------------------------------------------------
# derivative tests


@dataclass
class DerivativeTestResult:
    h0: int
    h1: int
    N: int
    L: int
    actual: float
    lambda1: Optional[float] = None
    bound1: Optional[float] = None
    lambda2: Optional[float] = None
    ratio2: Optional[float] = None
    bound2: Optional[float] = None
    lambda3: Optional[float] = None
    ratio3: Optional[float] = None
    bound3: Optional[float] = None
    failures: list = field(default_factory=list)


def _g_derivs(alpha: float, r: int, h0: int, h1: int, x: float, order: int) -> float:
    """g^{(order)}(x) for g = h0 x^α + h1 r α x^{α-1}."""
    def ff(a, m):
        out = 1.0
        for t in range(m):
            out *= a - t
        return out

    return h0 * ff(alpha, order) * x ** (alpha - order) + h1 * r * alpha * ff(alpha - 1, order) * x ** (alpha - 1 - order)


def _abs_range(alpha, r, h0, h1, order, lo, hi, crit) -> tuple:
    pts = [lo, hi] + [c for c in crit if lo < c < hi]
    vals = [_g_derivs(alpha, r, h0, h1, x, order) for x in pts]
    if min(vals) <= 0 <= max(vals):
        return 0.0, max(abs(v) for v in vals)
    av = [abs(v) for v in vals]
    return min(av), max(av)


def exp_sum(ps: PointSet2D, h0: int, h1: int) -> float:
    xy = ps.xy
    return float(abs(np.sum(np.exp(2j * np.pi * (h0 * xy[:, 0] + h1 * xy[:, 1])))))


def derivative_test_bounds(alpha, r: int, h0: int, h1: int, N: int, L: int,
                           ps: Optional[PointSet2D] = None) -> DerivativeTestResult:
    """λ-windows and bound shapes of the three derivative tests for
    g(x) = h0 f(x) + h1 r f'(x) on [N, N+L-1], with the actual |sum e(g(n))|.

    Absolute constants are not supplied; see ``fitted_multipliers``.
    """
    a = float(Fraction(alpha))
    if (h0, h1) == (0, 0):
        raise ValueError("(h0, h1) must be nonzero")
    lo, hi = float(N), float(N + L - 1)
    length = hi - lo if L > 1 else 1.0
    if ps is None:
        ps = orbit(fn.power(Fraction(alpha)), r, N, L)
    res = DerivativeTestResult(h0, h1, N, L, exp_sum(ps, h0, h1))
    # first derivative test: g' monotone, distance to the nearest integer
    g1 = [_g_derivs(a, r, h0, h1, x, 1) for x in (lo, hi)]
    crit2 = [h1 * r * (3 - a) / h0] if h0 else []
    g2min, _ = _abs_range(a, r, h0, h1, 2, lo, hi, crit2)
    if g2min > 0 or h0 == 0:
        if math.floor(min(g1)) == math.floor(max(g1)) and not float(min(g1)).is_integer():
            lam1 = min(min(v - math.floor(v), math.ceil(v) - v) for v in g1)
            res.lambda1, res.bound1 = lam1, 1.0 / lam1
        else:
            res.failures.append("lambda1: g' crosses an integer")
    else:
        res.failures.append("lambda1: g' not monotone")
    # second derivative test
    g2min, g2max = _abs_range(a, r, h0, h1, 2, lo, hi, crit2)
    if g2min > 0:
        res.lambda2, res.ratio2 = g2min, g2max / g2min
        res.bound2 = length * math.sqrt(g2min) + 1 / math.sqrt(g2min)
    else:
        res.failures.append("lambda2: g'' vanishes")
    # third derivative test
    crit3 = [h1 * r * (4 - a) / h0] if h0 else []
    g3min, g3max = _abs_range(a, r, h0, h1, 3, lo, hi, crit3)
    if 0 < g3min < 1:
        res.lambda3, res.ratio3 = g3min, g3max / g3min
        res.bound3 = length * g3min ** (1 / 6) + g3min ** (-1 / 3)
    else:
        res.failures.append("lambda3: |g'''| not inside (0, 1)")
    return res


def fitted_multipliers(results: Sequence[DerivativeTestResult]) -> dict:
    """max actual/bound per test over a corpus (the empirical implied constant)."""
    out = {}
    for name in ("bound1", "bound2", "bound3"):
        ratios = [r.actual / getattr(r, name) for r in results if getattr(r, name)]
        out[name.replace("bound", "test")] = max(ratios) if ratios else None
    return out


def discrepancy_report(alpha, r: int, N: int, L: int, H: int = 16, mode: Optional[str] = None,
                       G: int = DEFAULT_GRID) -> DiscrepancyReport:
    f = fn.power(Fraction(alpha))
    ps = orbit(f, r, N, L)
    if mode is None:
        mode = "exact" if L <= EXACT_CAP else "grid"
    D = extreme_discrepancy(ps, mode, G)
    etk, rad = etk_bound(ps, H)
    th = theory_bound(f.alpha, r, N, L)
    return DiscrepancyReport(f.alpha, r, N, L, D, H, etk, rad, th["case"], th["value"],
                             isotropic_bound(min(1.0, D.value), 2))
