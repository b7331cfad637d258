"""Exact univariate polynomial arithmetic over the integers and rationals.

Polynomials are coefficient sequences ordered from the constant term upward,
``(c_0, c_1, ..., c_n)``.  Integer inputs stay integers wherever the result
is integral; anything that may need division goes through ``Fraction``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, gcd, isqrt
from typing import Sequence

Coeffs = tuple


def trim(p: Sequence) -> tuple:
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return tuple(p) if p else (0,)


def degree(p: Sequence) -> int:
    p = trim(p)
    if len(p) == 1 and p[0] == 0:
        return -1
    return len(p) - 1


def add(p: Sequence, q: Sequence) -> tuple:
    n = max(len(p), len(q))
    return trim([(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)])


def sub(p: Sequence, q: Sequence) -> tuple:
    return add(p, [-c for c in q])


def mul(p: Sequence, q: Sequence) -> tuple:
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return trim(out)


def scale(p: Sequence, c) -> tuple:
    return trim([c * a for a in p])


def evaluate(p: Sequence, x):
    acc = 0
    for c in reversed(p):
        acc = acc * x + c
    return acc


def derivative(p: Sequence) -> tuple:
    return trim([i * p[i] for i in range(1, len(p))]) if len(p) > 1 else (0,)


def negate_argument(p: Sequence) -> tuple:
    """Coefficients of p(-t)."""
    return trim([c if i % 2 == 0 else -c for i, c in enumerate(p)])


def reverse(p: Sequence) -> tuple:
    """Coefficients of t^deg p(1/t)."""
    return trim(tuple(reversed(trim(p))))


def divmod_poly(p: Sequence, q: Sequence) -> tuple[tuple, tuple]:
    """Quotient and remainder over the rationals (exact)."""
    q = trim(q)
    if degree(q) < 0:
        raise ZeroDivisionError("polynomial division by zero")
    r = [Fraction(c) for c in trim(p)]
    dq = len(q) - 1
    lead = Fraction(q[-1])
    if len(r) - 1 < dq:
        return (0,), _integralize(r)
    quot = [Fraction(0)] * (len(r) - dq)
    for k in range(len(r) - 1 - dq, -1, -1):
        c = r[k + dq] / lead
        quot[k] = c
        if c:
            for j in range(dq + 1):
                r[k + j] -= c * q[j]
    return _integralize(quot), _integralize(r[:dq] if dq > 0 else [0])


def _integralize(p) -> tuple:
    out = []
    for c in p:
        if isinstance(c, Fraction) and c.denominator == 1:
            c = c.numerator
        out.append(c)
    return trim(out)


def divides_exactly(q: Sequence, p: Sequence) -> bool:
    """True iff q divides p with an integer quotient (q monic assumed)."""
    quot, rem = divmod_poly(p, q)
    return degree(rem) < 0 and all(isinstance(c, int) for c in quot)


def monic(p: Sequence) -> tuple:
    p = trim(p)
    lead = Fraction(p[-1])
    return _integralize([Fraction(c) / lead for c in p])


def gcd_poly(p: Sequence, q: Sequence) -> tuple:
    """Monic gcd over the rationals (``(1,)`` when coprime)."""
    a, b = trim(p), trim(q)
    if degree(a) < 0:
        return monic(b) if degree(b) >= 0 else (0,)
    while degree(b) >= 0:
        _, r = divmod_poly(a, b)
        a, b = b, r
    return monic(a)


def primitive_part(p: Sequence) -> tuple:
    """Integer primitive polynomial with positive leading coefficient, proportional to p."""
    fr = [Fraction(c) for c in trim(p)]
    den = 1
    for c in fr:
        den = den * c.denominator // gcd(den, c.denominator)
    ints = [int(c * den) for c in fr]
    g = 0
    for c in ints:
        g = gcd(g, c)
    if g == 0:
        return (0,)
    ints = [c // g for c in ints]
    if ints[-1] < 0:
        ints = [-c for c in ints]
    return trim(ints)


def squarefree_decomposition(p: Sequence) -> list[tuple[tuple, int]]:
    """Yun's algorithm: monic p = prod a_i^i with a_i squarefree and coprime.

    Returns ``[(a_i, i), ...]`` omitting constant factors.
    """
    p = monic(p)
    out = []
    dp = derivative(p)
    a = gcd_poly(p, dp)
    b = divmod_poly(p, a)[0]
    c = divmod_poly(dp, a)[0]
    d = sub(c, derivative(b))
    i = 1
    while degree(b) > 0:
        a = gcd_poly(b, d)
        if degree(a) > 0:
            out.append((monic(a), i))
        b = divmod_poly(b, a)[0]
        c = divmod_poly(d, a)[0]
        d = sub(c, derivative(b))
        i += 1
    return out


def is_squarefree(p: Sequence) -> bool:
    return degree(gcd_poly(p, derivative(p))) == 0


def norm2(p: Sequence) -> float:
    return sum(float(c) ** 2 for c in p) ** 0.5


def mignotte_bounds(p: Sequence, k: int) -> list[int]:
    """Coefficient bounds for any monic integer divisor of degree k.

    |g_j| <= C(k, j) * ||p||_2 (Mignotte); the ceiling of the
    integer square root keeps the bound exact.
    """
    s = sum(int(c) ** 2 for c in p)
    r = isqrt(s)
    if r * r < s:
        r += 1
    return [comb(k, j) * r for j in range(k + 1)]


def is_poly_in_tn(p: Sequence, n: int) -> bool:
    if n < 2:
        raise ValueError("n must be >= 2")
    return all(c == 0 for i, c in enumerate(p) if i % n)


def even_odd_parts(p: Sequence) -> tuple[tuple, tuple]:
    """E, O with p(t) = E(t^2) + t*O(t^2)."""
    even = trim([p[i] for i in range(0, len(p), 2)])
    odd = trim([p[i] for i in range(1, len(p), 2)]) if len(p) > 1 else (0,)
    return even, odd


def sturm_sequence(p: Sequence) -> list[tuple]:
    seq = [trim(p), derivative(p)]
    while degree(seq[-1]) > 0:
        _, r = divmod_poly(seq[-2], seq[-1])
        if degree(r) < 0:
            break
        seq.append(scale(r, -1))
    return seq


def _sign_changes(values) -> int:
    signs = [v for v in values if v != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if (a > 0) != (b > 0))


def _sign_at_infinity(p: Sequence, positive: bool) -> int:
    p = trim(p)
    lead = p[-1]
    if degree(p) % 2 == 1 and not positive:
        lead = -lead
    return 1 if lead > 0 else (-1 if lead < 0 else 0)


def count_real_roots(p: Sequence, lo=None, hi=None) -> int:
    """Number of distinct real roots in (lo, hi]; None means infinite."""
    p = trim(p)
    if degree(p) <= 0:
        return 0
    p = divmod_poly(p, gcd_poly(p, derivative(p)))[0]
    seq = sturm_sequence(p)

    def changes(x, positive):
        if x is None:
            return _sign_changes([_sign_at_infinity(q, positive) for q in seq])
        return _sign_changes([evaluate(q, Fraction(x)) for q in seq])

    return changes(lo, False) - changes(hi, True)


@lru_cache(maxsize=None)
def cyclotomic(m: int) -> tuple:
    """Integer coefficients of the m-th cyclotomic polynomial."""
    if m < 1:
        raise ValueError("m must be positive")
    num = tuple([-1] + [0] * (m - 1) + [1])
    for dd in range(1, m):
        if m % dd == 0:
            num = divmod_poly(num, cyclotomic(dd))[0]
    return num


def euler_phi(m: int) -> int:
    result, n, q = m, m, 2
    while q * q <= n:
        if n % q == 0:
            while n % q == 0:
                n //= q
            result -= result // q
        q += 1
    if n > 1:
        result -= result // n
    return result


def cyclotomic_factors(p: Sequence) -> list[int]:
    """Indices m with Phi_m dividing p (roots of unity among the roots)."""
    deg = degree(p)
    found = []
    for m in range(1, 2 * deg * deg + 3):
        if euler_phi(m) <= deg and divides_exactly(cyclotomic(m), p):
            found.append(m)
    return found


def format_poly(p: Sequence, var: str = "t") -> str:
    terms = []
    for i in range(len(p) - 1, -1, -1):
        c = p[i]
        if c == 0:
            continue
        mag = abs(c)
        if i == 0:
            body = f"{mag}"
        else:
            mono = var if i == 1 else f"{var}^{i}"
            body = mono if mag == 1 else f"{mag}*{mono}"
        sign = "-" if c < 0 else "+"
        terms.append((sign, body))
    if not terms:
        return "0"
    first_sign, first = terms[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in terms[1:]:
        out += f" {sign} {body}"
    return out


@dataclass(frozen=True)
class CharPoly:
    """Monic integer polynomial, coefficients ``c_0..c_d`` (``c_d == 1``)."""

    coeffs: tuple

    def __post_init__(self):
        c = trim(tuple(int(x) for x in self.coeffs))
        if c[-1] != 1:
            raise ValueError(f"polynomial is not monic: {c}")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return evaluate(self.coeffs, x)

    def __str__(self) -> str:
        return format_poly(self.coeffs)
