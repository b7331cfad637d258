"""Periodic points of a toral automorphism, counted and enumerated exactly."""

from __future__ import annotations

from fractions import Fraction

from ..errors import CapacityError, DegenerateError
from .matrix import IntMatrix, adjugate_rows, det_bareiss, matpow_rows

DEFAULT_CAP = 10_000


def _shifted_power(m: IntMatrix, n: int) -> tuple:
    if n < 1:
        raise ValueError("period must be >= 1")
    p = matpow_rows(m.entries, n)
    return tuple(tuple(p[i][j] - (i == j) for j in range(m.dim)) for i in range(m.dim))


def periodic_count(m: IntMatrix, n: int) -> int:
    """Number of points with L^n x = x on the torus, |det(L^n - I)|."""
    det = det_bareiss(_shifted_power(m, n))
    if det == 0:
        raise DegenerateError(f"L^{n} has eigenvalue 1; infinitely many periodic points")
    return abs(det)


def periodic_points(m: IntMatrix, n: int, cap: int = DEFAULT_CAP) -> list[tuple[Fraction, ...]]:
    """All x in [0,1)^d with (L^n - I) x integral, as exact rationals.

    The solution set mod Z^d is the finite group generated by the columns of
    (L^n - I)^{-1}; we take its closure under addition, sorted lexicographically.
    """
    a = _shifted_power(m, n)
    det = det_bareiss(a)
    if det == 0:
        raise DegenerateError(f"L^{n} has eigenvalue 1; infinitely many periodic points")
    if abs(det) > cap:
        raise CapacityError(f"{abs(det)} periodic points exceed cap {cap}")
    d = m.dim
    adj = adjugate_rows(a)
    gens = []
    for j in range(d):
        g = tuple(Fraction(adj[i][j], det) % 1 for i in range(d))
        if any(g):
            gens.append(g)
    zero = tuple(Fraction(0) for _ in range(d))
    seen = {zero}
    frontier = [zero]
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens:
                q = tuple((x + y) % 1 for x, y in zip(p, g))
                if q not in seen:
                    seen.add(q)
                    nxt.append(q)
        frontier = nxt
    return sorted(seen)
