"""Exact rational polytopes for the C_{k,d+1} family.

C_{k,d+1} is the set of y in R^{d+1} with 0 <= y_0 < 1 and
0 <= sum_i C(j, i) y_i < 1 for j = 1..k-1. Its volume is the limiting
density of starts n for which (floor f(n + r j))_{j<k} lies in P_{k,d}.
All geometry here is exact; volumes are rationals. The sets are half-open
but we work with their closures, which have the same volume.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from gmpy2 import mpq

from .exactmath import as_rational, binomial, format_rational

LABELS = ("C", "Cminus", "Cplus", "Cprime", "Custom")


class UnboundedPolytopeError(ValueError):
    pass


@dataclass(frozen=True)
class HalfSpace:
    """normal . y >= offset"""

    normal: tuple
    offset: Fraction

    def __post_init__(self):
        if all(c == 0 for c in self.normal):
            raise ValueError("halfspace normal must be nonzero")

    def value(self, y: Sequence[Fraction]) -> Fraction:
        return sum(c * v for c, v in zip(self.normal, y)) - self.offset


@dataclass(frozen=True)
class Polytope:
    dim: int
    halfspaces: tuple
    label: str = "Custom"
    params: tuple = ()

    def contains(self, y: Sequence) -> bool:
        return all(h.value(y) >= 0 for h in self.halfspaces)

    def to_dict(self, with_volume: bool = True) -> dict:
        out = {
            "dim": self.dim,
            "label": self.label,
            "halfspaces": [
                {"normal": [format_rational(c) for c in h.normal], "offset": format_rational(h.offset)}
                for h in self.halfspaces
            ],
        }
        if with_volume:
            vr = volume_exact(self)
            out["volume"] = format_rational(vr.volume)
            out["vertices"] = [[format_rational(c) for c in v] for v in vertices(self)]
        return out


@dataclass(frozen=True)
class VolumeResult:
    volume: Fraction
    vertex_count: int
    simplex_count: int


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    samples: int
    box_volume: float


def _hs(normal, offset) -> HalfSpace:
    return HalfSpace(tuple(Fraction(c) for c in normal), Fraction(offset))


def _band(normal, lo, hi) -> list:
    """lo <= normal . y <= hi as two halfspaces."""
    return [_hs(normal, lo), _hs([-c for c in normal], -Fraction(hi))]


def build_C(k: int, d: int, variant: str = "C", eps=0) -> Polytope:
    """The C_{k,d+1} family in dimension d+1.

    variant "C": 0 <= sum_i C(j,i) y_i <= 1 for j = 0..k-1.
    variant "Cminus": faces j >= 1 become 0 <= . <= 1 - eps (one-sided).
    variant "Cplus": faces j >= 1 become -eps <= . <= 1 + eps.
    variant "Cprime": 0 <= y_0 <= 1 and 0 <= sum_{i<=j} C(k-1,i) y_i <= 1 for j = 1..d.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if k < d + 2:
        raise ValueError(f"k must be >= d+2 (k={k}, d={d})")
    if variant not in LABELS or variant == "Custom":
        raise ValueError(f"unknown variant {variant!r}")
    eps = as_rational(eps) if not isinstance(eps, Fraction) else eps
    if variant in ("Cminus", "Cplus") and not 0 <= eps < Fraction(1, 2):
        raise ValueError(f"eps must lie in [0, 1/2), got {eps}")
    m = d + 1
    hs = _band([1] + [0] * d, 0, 1)
    if variant == "Cprime":
        for j in range(1, d + 1):
            normal = [binomial(k - 1, i) if i <= j else 0 for i in range(m)]
            hs += _band(normal, 0, 1)
        return Polytope(m, tuple(hs), "Cprime", (k, d))
    lo, hi = Fraction(0), Fraction(1)
    if variant == "Cminus":
        hi = 1 - eps
    elif variant == "Cplus":
        lo, hi = -eps, 1 + eps
    params = (k, d) if variant == "C" else (k, d, eps)
    return band_polytope(k, d, lo, hi, variant, params)


def band_polytope(k: int, d: int, lo, hi, label: str = "Custom", params: tuple = ()) -> Polytope:
    """0 <= y_0 <= 1 and lo <= sum_i C(j,i) y_i <= hi for j = 1..k-1."""
    m = d + 1
    hs = _band([1] + [0] * d, 0, 1)
    for j in range(1, k):
        hs += _band([binomial(j, i) for i in range(m)], Fraction(lo), Fraction(hi))
    return Polytope(m, tuple(hs), label, params)


def unit_cube(m: int) -> Polytope:
    hs = []
    for t in range(m):
        e = [0] * m
        e[t] = 1
        hs += _band(e, 0, 1)
    return Polytope(m, tuple(hs), "Custom")


def custom(halfspaces: Sequence[tuple]) -> Polytope:
    """Polytope from (normal, offset) pairs meaning normal . y >= offset."""
    hs = tuple(_hs(n, o) for n, o in halfspaces)
    dims = {len(h.normal) for h in hs}
    if len(dims) != 1:
        raise ValueError("all normals must have the same dimension")
    return Polytope(dims.pop(), hs, "Custom")


def lower_bound(k: int, d: int) -> Fraction:
    """1 / prod_{i=1}^d C(k-1, i)."""
    if k < d + 2:
        raise ValueError(f"k must be >= d+2 (k={k}, d={d})")
    return Fraction(1, math.prod(binomial(k - 1, i) for i in range(1, d + 1)))


# ---------------------------------------------------------------------------
# exact linear algebra


def _solve(M: list, b: list) -> Optional[list]:
    """Solve M x = b exactly; None if M is singular."""
    m = len(M)
    A = [list(row) + [bv] for row, bv in zip(M, b)]
    for c in range(m):
        piv = next((r for r in range(c, m) if A[r][c] != 0), None)
        if piv is None:
            return None
        A[c], A[piv] = A[piv], A[c]
        pv = A[c][c]
        for r in range(m):
            if r != c and A[r][c] != 0:
                fct = A[r][c] / pv
                A[r] = [x - fct * y for x, y in zip(A[r], A[c])]
    return [A[r][m] / A[r][r] for r in range(m)]


def _inverse(M: list) -> Optional[list]:
    m = len(M)
    A = [list(map(mpq, row)) + [mpq(int(i == r)) for i in range(m)] for r, row in enumerate(M)]
    for c in range(m):
        piv = next((r for r in range(c, m) if A[r][c] != 0), None)
        if piv is None:
            return None
        A[c], A[piv] = A[piv], A[c]
        pv = A[c][c]
        A[c] = [x / pv for x in A[c]]
        for r in range(m):
            if r != c and A[r][c] != 0:
                fct = A[r][c]
                A[r] = [x - fct * y for x, y in zip(A[r], A[c])]
    return [row[m:] for row in A]


def _rank(rows: list) -> int:
    A = [list(r) for r in rows]
    if not A:
        return 0
    rank = 0
    ncols = len(A[0])
    for c in range(ncols):
        piv = next((r for r in range(rank, len(A)) if A[r][c] != 0), None)
        if piv is None:
            continue
        A[rank], A[piv] = A[piv], A[rank]
        for r in range(rank + 1, len(A)):
            if A[r][c] != 0:
                fct = A[r][c] / A[rank][c]
                A[r] = [x - fct * y for x, y in zip(A[r], A[rank])]
        rank += 1
        if rank == len(A):
            break
    return rank


def _det(M: list) -> Fraction:
    A = [list(r) for r in M]
    m = len(A)
    det = mpq(1)
    for c in range(m):
        piv = next((r for r in range(c, m) if A[r][c] != 0), None)
        if piv is None:
            return mpq(0)
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            det = -det
        pv = A[c][c]
        det *= pv
        for r in range(c + 1, m):
            if A[r][c] != 0:
                fct = A[r][c] / pv
                A[r] = [x - fct * y for x, y in zip(A[r], A[c])]
    return det


def _affine_rank(points: list) -> int:
    if len(points) <= 1:
        return 0
    p0 = points[0]
    return _rank([[a - b for a, b in zip(p, p0)] for p in points[1:]])


def _primitive(normal: tuple) -> tuple:
    """Scale a rational normal to a primitive integer vector with positive leading entry.

    Returns (direction, factor) with normal = factor * direction.
    """
    den = math.lcm(*(c.denominator for c in normal))
    ints = [int(c * den) for c in normal]
    g = math.gcd(*ints)
    ints = [x // g for x in ints]
    lead = next(x for x in ints if x != 0)
    sign = 1 if lead > 0 else -1
    direction = tuple(sign * x for x in ints)
    return direction, Fraction(sign * g, den)


# ---------------------------------------------------------------------------
# vertices and volume

_VERTEX_CACHE: dict = {}
_VOLUME_CACHE: dict = {}


def _key(p: Polytope) -> tuple:
    return (p.dim, p.halfspaces)


def _to_fraction(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


def vertices(p: Polytope) -> list:
    """All vertices of p as tuples of Fractions, sorted.

    Each vertex solves m linearly independent face equations. Faces sharing a
    normal direction are grouped so every m-subset of directions is inverted
    once. An empty or vertex-free set returns []; an unbounded polytope with
    vertices raises UnboundedPolytopeError.
    """
    return [tuple(_to_fraction(c) for c in v) for v in _vertices_q(p)]


def _vertices_q(p: Polytope) -> list:
    key = _key(p)
    if key in _VERTEX_CACHE:
        return _VERTEX_CACHE[key]
    m = p.dim
    groups: dict = {}
    for h in p.halfspaces:
        direction, factor = _primitive(h.normal)
        groups.setdefault(direction, set()).add(h.offset / factor)
    dirs = sorted(groups)
    values = [[mpq(v) for v in sorted(groups[dv])] for dv in dirs]
    rows = [([mpq(c) for c in h.normal], mpq(h.offset)) for h in p.halfspaces]
    found = set()
    for combo in itertools.combinations(range(len(dirs)), m):
        Minv = _inverse([list(dirs[t]) for t in combo])
        if Minv is None:
            continue
        for vals in itertools.product(*(values[t] for t in combo)):
            y = tuple(sum(Minv[r][c] * vals[c] for c in range(m)) for r in range(m))
            if all(sum(a * b for a, b in zip(nrm, y)) >= off for nrm, off in rows):
                found.add(y)
    verts = sorted(found)
    if verts and _has_recession_ray(p, dirs):
        raise UnboundedPolytopeError(f"polytope {p.label} is unbounded")
    _VERTEX_CACHE[key] = verts
    return verts


def _has_recession_ray(p: Polytope, dirs: list) -> bool:
    m = p.dim
    normals = [h.normal for h in p.halfspaces]
    if m == 1:
        candidates = [(Fraction(1),), (Fraction(-1),)]
    else:
        candidates = []
        for combo in itertools.combinations(dirs, m - 1):
            ray = _null_vector([list(map(Fraction, c)) for c in combo], m)
            if ray is not None:
                candidates += [ray, tuple(-x for x in ray)]
    for ray in candidates:
        if all(sum(a * b for a, b in zip(nrm, ray)) >= 0 for nrm in normals):
            return True
    return False


def _null_vector(rows: list, m: int) -> Optional[tuple]:
    """Generator of a one-dimensional null space, or None."""
    if _rank(rows) != m - 1:
        return None
    for t in range(m):
        e = [Fraction(int(i == t)) for i in range(m)]
        sol = _solve(rows + [e], [Fraction(0)] * (m - 1) + [Fraction(1)])
        if sol is not None:
            return tuple(sol)
    return None


def _triangulate(face: frozenset, t: int, verts: list, tight: list, out: list, prefix: tuple) -> None:
    """Cone the t-dimensional face over its centroid, recursing into its facets.

    ``tight[h]`` is the set of vertex indices on halfspace h. Appends simplices
    (tuples of points) of dimension t to ``out`` with ``prefix`` apexes.
    """
    pts = [verts[i] for i in sorted(face)]
    if t == 0:
        out.append(prefix + (pts[0],))
        return
    if t == 1:
        a, b = _segment_ends(pts)
        out.append(prefix + (a, b))
        return
    size = len(pts)
    centroid = tuple(sum(c) / size for c in zip(*pts))
    seen = set()
    for tset in tight:
        sub = face & tset
        if len(sub) < t or sub == face or sub in seen:
            continue
        if _affine_rank([verts[i] for i in sub]) != t - 1:
            continue
        seen.add(sub)
        _triangulate(sub, t - 1, verts, tight, out, prefix + (centroid,))


def _segment_ends(pts: list) -> tuple:
    # collinear points: take the two extremes along the first varying coordinate
    axis = next(i for i in range(len(pts[0])) if any(p[i] != pts[0][i] for p in pts))
    return min(pts, key=lambda p: p[axis]), max(pts, key=lambda p: p[axis])


def volume_exact(p: Polytope) -> VolumeResult:
    """Exact volume by recursive facet coning; 0 for empty or flat polytopes."""
    key = _key(p)
    if key in _VOLUME_CACHE:
        return _VOLUME_CACHE[key]
    verts = _vertices_q(p)
    m = p.dim
    if len(verts) <= m or _affine_rank(verts) < m:
        res = VolumeResult(Fraction(0), len(verts), 0)
        _VOLUME_CACHE[key] = res
        return res
    tight = []
    for h in p.halfspaces:
        nrm, off = [mpq(c) for c in h.normal], mpq(h.offset)
        tight.append(frozenset(i for i, v in enumerate(verts) if sum(a * b for a, b in zip(nrm, v)) == off))
    simplices: list = []
    _triangulate(frozenset(range(len(verts))), m, verts, tight, simplices, ())
    total = mpq(0)
    for s in simplices:
        base = s[0]
        total += abs(_det([[a - b for a, b in zip(v, base)] for v in s[1:]]))
    res = VolumeResult(_to_fraction(total / math.factorial(m)), len(verts), len(simplices))
    _VOLUME_CACHE[key] = res
    return res


def volume_montecarlo(p: Polytope, samples: int, seed: int, chunk: int = 1 << 20) -> MonteCarloEstimate:
    """Hit-or-miss estimate over the vertex bounding box.

    Chunks draw from independent child streams of one SeedSequence and are
    summed in order, so the estimate depends only on (samples, seed, chunk).
    """
    verts = vertices(p)
    if not verts:
        return MonteCarloEstimate(0.0, 0.0, samples, 0.0)
    lo = np.array([float(min(v[i] for v in verts)) for i in range(p.dim)])
    hi = np.array([float(max(v[i] for v in verts)) for i in range(p.dim)])
    box = float(np.prod(hi - lo))
    if box == 0.0:
        return MonteCarloEstimate(0.0, 0.0, samples, 0.0)
    A = np.array([[float(c) for c in h.normal] for h in p.halfspaces])
    b = np.array([float(h.offset) for h in p.halfspaces])
    nchunks = -(-samples // chunk)
    streams = np.random.SeedSequence(seed).spawn(nchunks)
    hits = 0
    remaining = samples
    for ss in streams:
        size = min(chunk, remaining)
        remaining -= size
        rng = np.random.default_rng(ss)
        y = lo + (hi - lo) * rng.random((size, p.dim))
        hits += int(np.count_nonzero(np.all(y @ A.T >= b, axis=1)))
    phat = hits / samples
    est = phat * box
    se = box * math.sqrt(max(phat * (1 - phat), 0.0) / samples)
    return MonteCarloEstimate(est, se, samples, box)
