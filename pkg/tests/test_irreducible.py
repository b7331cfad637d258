import itertools
from math import comb

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from toral_rigidity.algebra import CharPoly, find_divisor, is_irreducible
from toral_rigidity.algebra import poly as P
from toral_rigidity.errors import CapacityError


def _monic_divides(g, p):
    """Long division of integer p by monic integer g (both low-to-high)."""
    r = list(p)
    k = len(g) - 1
    for i in range(len(r) - 1, k - 1, -1):
        q = r[i]
        if q:
            for j in range(k + 1):
                r[i - k + j] -= q * g[j]
    return not any(r[:k])


def brute_force_reducible(p):
    """Degree-by-degree enumeration of monic integer divisors.

    Roots lie in |z| < B = 1 + max|c_i| (Cauchy), so a degree-k divisor has
    |g_{k-j}| <= C(k, j) B^j; the constant term also divides c_0.
    """
    n = len(p) - 1
    if p[0] == 0:
        return True
    b = 1 + max(abs(c) for c in p[:-1])
    consts = [s * d for d in range(1, abs(p[0]) + 1) if p[0] % d == 0 for s in (1, -1)]
    for k in range(1, n // 2 + 1):
        ranges = [range(-comb(k, k - j) * b ** (k - j), comb(k, k - j) * b ** (k - j) + 1) for j in range(1, k)]
        for const in consts:
            for mid in itertools.product(*ranges):
                if _monic_divides((const,) + mid + (1,), p):
                    return True
    return False


monic = st.integers(2, 6).flatmap(
    lambda n: st.lists(st.integers(-5, 5), min_size=n, max_size=n).map(lambda c: tuple(c) + (1,))
)


@settings(max_examples=80, deadline=None)
@given(monic)
def test_matches_brute_force_factorizer(c):
    assert is_irreducible(CharPoly(c)) == (not brute_force_reducible(c))


@settings(max_examples=150, deadline=None)
@given(monic)
def test_matches_sympy(c):
    t = sp.symbols("t")
    poly = sp.Poly(list(reversed(c)), t)
    assert is_irreducible(CharPoly(c)) == poly.is_irreducible


@settings(max_examples=60, deadline=None)
@given(monic, monic)
def test_products_are_reducible_and_divisor_is_exact(a, b):
    p = P.mul(a, b)
    if len(p) - 1 > 12:
        return
    g = find_divisor(CharPoly(p))
    assert g is not None
    assert 1 <= P.degree(g) < P.degree(p)
    assert P.divides_exactly(g, p)


@pytest.mark.parametrize(
    "coeffs, expected",
    [
        ((1, -3, 1), True),
        ((1, -2, 0, -2, 1), True),
        ((1, 0, -7, 0, 1), False),  # (t^2 - 3t + 1)(t^2 + 3t + 1)
        ((1, 0, -5, 0, 1), True),
        ((1, 68, 1158, 68, 1), False),  # a perfect square
        ((1, -4, 7, -4, 1), True),
        ((1, 0, 0, 0, 1), True),
        ((4, 0, 0, 0, 1), False),  # Sophie Germain: (t^2 + 2t + 2)(t^2 - 2t + 2)
    ],
)
def test_known_cases(coeffs, expected):
    assert is_irreducible(CharPoly(coeffs)) is expected


def test_degree_cap():
    with pytest.raises(CapacityError):
        is_irreducible(CharPoly((1,) + (0,) * 12 + (1,)))
