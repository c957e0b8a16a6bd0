from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from psprog.exactmath import (
    CertifiedReal,
    UnresolvedFloorError,
    as_rational,
    binomial,
    certify_floor,
    falling_factorial,
    format_rational,
    integer_root,
    precision_schedule,
    stirling2,
)


def test_stirling_examples():
    assert stirling2(0, 0) == 1
    assert stirling2(3, 2) == 3
    assert stirling2(4, 2) == 7


def test_stirling_matches_recurrence_oracle():
    def oracle(n, k):
        if n == k:
            return 1
        if k == 0 or k > n:
            return 0
        return k * oracle(n - 1, k) + oracle(n - 1, k - 1)

    for n in range(13):
        for k in range(n + 1):
            assert stirling2(n, k) == oracle(n, k)
    assert stirling2(20, 7) == sympy.functions.combinatorial.numbers.stirling(20, 7)


@pytest.mark.parametrize("l,i", [(-1, 0), (3, 4), (65, 1), (2, -1)])
def test_stirling_range(l, i):
    with pytest.raises(ValueError):
        stirling2(l, i)


def test_stirling_polynomial_identity():
    x = sympy.Symbol("x")
    for l in range(13):
        expanded = sum(stirling2(l, i) * sympy.ff(x, i) for i in range(l + 1))
        assert sympy.expand(expanded - x ** l) == 0


def test_binomial_examples():
    assert binomial(2, 3) == 0
    assert binomial(5, 0) == 1
    assert binomial(6, 2) == 15


def test_falling_factorial():
    assert falling_factorial(Fraction(3, 2), 2) == Fraction(3, 4)
    assert falling_factorial(5, 0) == 1


def test_rational_parsing():
    assert as_rational("3/2") == Fraction(3, 2)
    assert as_rational("1.25") == Fraction(5, 4)
    with pytest.raises(TypeError):
        as_rational(1.5)
    with pytest.raises(ValueError):
        as_rational("abc")
    assert format_rational(Fraction(6, 4)) == "3/2"
    assert format_rational(Fraction(2)) == "2/1"


def test_certify_floor_examples():
    assert certify_floor(CertifiedReal.from_bounds("2.82", "2.84")) == 2
    x = CertifiedReal.from_bounds("4.9999", "5.0001")
    with pytest.raises(UnresolvedFloorError) as err:
        certify_floor(x, schedule=[])
    assert err.value.enclosure is x


def test_certify_floor_exact_integer_witness():
    root, exact = integer_root(4 ** 3, 2)
    assert (root, exact) == (8, True)
    assert certify_floor(CertifiedReal.exact(8)) == 8


def test_precision_schedule():
    assert list(precision_schedule(128, 1024)) == [128, 256, 512, 1024]


def test_division_by_enclosure_of_zero():
    with pytest.raises(ZeroDivisionError):
        CertifiedReal.exact(1) / CertifiedReal.from_bounds(-1, 1)


rationals = st.fractions(min_value=-10 ** 6, max_value=10 ** 6, max_denominator=10 ** 6)


@given(rationals)
def test_exact_enclosure_contains_value(q):
    x = CertifiedReal.exact(q)
    assert x.lower_q <= q <= x.upper_q


@given(rationals)
def test_certify_floor_on_known_rationals(q):
    x = CertifiedReal.exact(q)
    try:
        m = certify_floor(x)
    except UnresolvedFloorError:
        # only integers may stay unresolved, and only when the enclosure straddles
        assert q.denominator == 1
        return
    assert m <= q < m + 1


@settings(max_examples=50)
@given(st.fractions(min_value=Fraction(1, 10), max_value=100, max_denominator=1000),
       st.sampled_from([128, 256, 512]))
def test_refinement_is_nested(q, bits):
    x = CertifiedReal.exact(q, 64).log()
    y = x.refine(bits * 2)
    assert x.lower <= y.lower and y.upper <= x.upper


@settings(max_examples=50)
@given(st.fractions(min_value=1, max_value=1000, max_denominator=100),
       st.fractions(min_value=-3, max_value=3, max_denominator=10))
def test_arithmetic_encloses_exact_results(a, b):
    A, B = CertifiedReal.exact(a), CertifiedReal.exact(b)
    for enc, val in ((A + B, a + b), (A - B, a - b), (A * B, a * b)):
        assert enc.lower_q <= val <= enc.upper_q
    if b != 0:
        q = A / B
        assert q.lower_q <= a / b <= q.upper_q


def test_pow_encloses_sympy_value():
    x = CertifiedReal.exact(3).pow(CertifiedReal.exact(Fraction(3, 2)))
    true = sympy.Rational(3) ** sympy.Rational(3, 2)
    lo, hi = sympy.Rational(*x.lower_q.as_integer_ratio()), sympy.Rational(*x.upper_q.as_integer_ratio())
    assert lo <= true <= hi
    assert float(x.width) < 2.0 ** -100
