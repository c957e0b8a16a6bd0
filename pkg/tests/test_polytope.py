import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psprog import polytope as poly
from psprog.exactmath import binomial

GRID = [(k, d) for d in (1, 2, 3) for k in range(d + 2, d + 7)]

# exact volumes of C_{k,d+1}, frozen from the first run and cross-checked by
# Monte Carlo (d = 1 values are the closed form 1/(k-1))
FROZEN = {
    (4, 2): Fraction(8, 27), (5, 2): Fraction(13, 108), (6, 2): Fraction(83, 1350),
    (7, 2): Fraction(143, 4050), (8, 2): Fraction(1469, 66150),
    (5, 3): Fraction(89, 576), (6, 3): Fraction(361, 9000), (7, 3): Fraction(511, 38880),
    (8, 3): Fraction(5027, 987840), (9, 3): Fraction(63851, 28224000),
}


def _oracle_vertices(p):
    """All m-subsets of faces solved exactly with Fractions, filtered by feasibility."""
    m = p.dim
    out = set()
    for sub in itertools.combinations(p.halfspaces, m):
        A = [list(h.normal) for h in sub]
        b = [h.offset for h in sub]
        # Gauss-Jordan over Fractions
        M = [row[:] + [bi] for row, bi in zip(A, b)]
        ok = True
        for c in range(m):
            piv = next((r for r in range(c, m) if M[r][c] != 0), None)
            if piv is None:
                ok = False
                break
            M[c], M[piv] = M[piv], M[c]
            for r in range(m):
                if r != c and M[r][c] != 0:
                    t = M[r][c] / M[c][c]
                    M[r] = [x - t * y for x, y in zip(M[r], M[c])]
        if not ok:
            continue
        y = tuple(M[r][m] / M[r][r] for r in range(m))
        if p.contains(y):
            out.add(y)
    return out


def test_build_C_k3():
    p = poly.build_C(3, 1)
    assert p.dim == 2 and len(p.halfspaces) == 6
    rows = {(tuple(h.normal), h.offset) for h in p.halfspaces}
    for normal in ((1, 0), (1, 1), (1, 2)):
        assert (normal, 0) in rows
        assert (tuple(-c for c in normal), -1) in rows


def test_build_C_validation():
    with pytest.raises(ValueError):
        poly.build_C(3, 2)
    with pytest.raises(ValueError):
        poly.build_C(4, 1, "Cminus", Fraction(1, 2))
    with pytest.raises(ValueError):
        poly.build_C(4, 1, "Nope")


def test_build_Cprime_faces():
    p = poly.build_C(4, 2, "Cprime")
    normals = {tuple(h.normal) for h in p.halfspaces if h.offset == 0}
    assert normals == {(1, 0, 0), (1, 3, 0), (1, 3, 3)}


@pytest.mark.parametrize("k,d", GRID[:8])
def test_vertices_match_subset_oracle(k, d):
    p = poly.build_C(k, d)
    assert set(poly.vertices(p)) == _oracle_vertices(p)


def test_vertices_k3_and_square():
    assert set(poly.vertices(poly.build_C(3, 1))) == {(0, 0), (1, 0), (0, Fraction(1, 2)), (1, -Fraction(1, 2))}
    assert set(poly.vertices(poly.unit_cube(2))) == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_empty_and_unbounded():
    empty = poly.custom([((1, 0), 1), ((-1, 0), 0), ((0, 1), 0), ((0, -1), -1)])
    assert poly.vertices(empty) == []
    assert poly.volume_exact(empty).volume == 0
    half = poly.custom([((1, 0), 0), ((0, 1), 0), ((0, -1), -1)])
    with pytest.raises(poly.UnboundedPolytopeError):
        poly.vertices(half)


@pytest.mark.parametrize("k", range(3, 11))
def test_volume_C_k2(k):
    assert poly.volume_exact(poly.build_C(k, 1)).volume == Fraction(1, k - 1)


@pytest.mark.parametrize("k,d", GRID)
def test_volume_Cprime(k, d):
    expect = Fraction(1, math.prod(binomial(k - 1, i) for i in range(1, d + 1)))
    assert poly.volume_exact(poly.build_C(k, d, "Cprime")).volume == expect


@pytest.mark.parametrize("k,d", sorted(FROZEN))
def test_frozen_volumes(k, d):
    assert poly.volume_exact(poly.build_C(k, d)).volume == FROZEN[(k, d)]


def test_unit_cube():
    assert poly.volume_exact(poly.unit_cube(3)).volume == 1
    assert poly.volume_exact(poly.unit_cube(5)).volume == 1


def test_lower_bound_examples():
    assert poly.lower_bound(3, 1) == Fraction(1, 2)
    assert poly.lower_bound(4, 2) == Fraction(1, 9)
    assert poly.lower_bound(5, 1) == Fraction(1, 4)


@pytest.mark.parametrize("k,d", GRID)
def test_Cprime_inside_C_and_lower_bound(k, d):
    C = poly.build_C(k, d)
    for v in poly.vertices(poly.build_C(k, d, "Cprime")):
        assert C.contains(v)
    vol = poly.volume_exact(C).volume
    lb = poly.lower_bound(k, d)
    assert vol >= lb
    assert (vol == lb) == (d == 1)


@pytest.mark.parametrize("k,d", [(3, 1), (5, 1), (4, 2), (6, 2), (5, 3)])
def test_eps_monotone_and_convergent(k, d):
    base = poly.volume_exact(poly.build_C(k, d)).volume
    lb = poly.lower_bound(k, d)
    gaps = []
    for eps in (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16)):
        lo = poly.volume_exact(poly.build_C(k, d, "Cminus", eps)).volume
        hi = poly.volume_exact(poly.build_C(k, d, "Cplus", eps)).volume
        assert lo <= base <= hi
        assert lo >= (1 - eps) ** (d + 1) * lb
        gaps.append(hi - lo)
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.parametrize("k,d", [(3, 1), (4, 2), (5, 3), (6, 2)])
def test_montecarlo_agrees(k, d):
    p = poly.build_C(k, d)
    mc = poly.volume_montecarlo(p, 10 ** 6, seed=11)
    assert abs(mc.estimate - float(poly.volume_exact(p).volume)) <= 4 * mc.stderr
    again = poly.volume_montecarlo(p, 10 ** 6, seed=11)
    assert again.estimate == mc.estimate


def test_montecarlo_degenerate_slab():
    slab = poly.custom([((1, 0), 0), ((-1, 0), 0), ((0, 1), 0), ((0, -1), -1)])
    assert poly.volume_montecarlo(slab, 1000, 1).estimate == 0


def test_json_shape():
    d = poly.build_C(3, 1).to_dict()
    assert set(d) == {"dim", "label", "halfspaces", "volume", "vertices"}
    assert d["volume"] == "1/2"
    assert d["halfspaces"][0] == {"normal": ["1/1", "0/1"], "offset": "0/1"}


boxes = st.lists(st.tuples(st.fractions(-5, 5, max_denominator=20), st.fractions(0, 5, max_denominator=20)),
                 min_size=1, max_size=4)


@settings(max_examples=40, deadline=None)
@given(boxes)
def test_box_volume_is_product(sides):
    hs = []
    m = len(sides)
    for t, (lo, w) in enumerate(sides):
        e = [0] * m
        e[t] = 1
        hs.append((tuple(e), lo))
        hs.append((tuple(-c for c in e), -(lo + w)))
    assert poly.volume_exact(poly.custom(hs)).volume == math.prod(w for _, w in sides)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10 ** 6))
def test_simplex_volume_matches_determinant(m, seed):
    import random

    rnd = random.Random(seed)
    # simplex {y >= 0, sum c_i y_i <= 1} has volume 1 / (m! prod c_i)
    c = [rnd.randint(1, 5) for _ in range(m)]
    hs = []
    for t in range(m):
        e = [0] * m
        e[t] = 1
        hs.append((tuple(e), 0))
    hs.append((tuple(-x for x in c), -1))
    vol = poly.volume_exact(poly.custom(hs)).volume
    assert vol == Fraction(1, math.factorial(m) * math.prod(c))


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(6))))
def test_volume_independent_of_face_order(perm):
    p = poly.build_C(3, 1)
    shuffled = poly.Polytope(2, tuple(p.halfspaces[i] for i in perm))
    assert poly.volume_exact(shuffled).volume == Fraction(1, 2)
