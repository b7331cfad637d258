"""Irreducibility over the rationals by exhaustive divisor search.

A monic integer polynomial p of degree n is reducible iff it has a monic
integer divisor g with 1 <= deg g <= n/2 (Gauss).  Every such g is the product
of (t - lambda) over some conjugation-closed subset of the roots of p, so the
candidate set is finite: we enumerate all of those subsets, discard candidates
whose coefficients break the Mignotte bound, round the rest (the rounding is
certified by the root radii) and confirm by exact trial division.
"""

from __future__ import annotations

from itertools import combinations

import mpmath

from ..errors import CapacityError, PrecisionError
from . import poly as P
from .poly import CharPoly
from .roots import certified_roots

MAX_DEGREE = 12


def _divisors(n: int) -> list[int]:
    n = abs(n)
    small = [k for k in range(1, int(n**0.5) + 1) if n % k == 0]
    return sorted(set(small + [n // k for k in small]))


def _subset_poly(centers, radii, subset, prec):
    """Coefficients of prod (t - z_i) plus a coefficientwise error bound."""
    with mpmath.workprec(prec):
        coeffs = [mpmath.mpc(1)]
        bound_hi = [mpmath.mpf(1)]
        bound_lo = [mpmath.mpf(1)]
        for i in subset:
            z, r = centers[i], radii[i]
            a = abs(z)
            coeffs = [mpmath.mpc(0)] + coeffs
            for k in range(len(coeffs) - 1):
                coeffs[k] -= z * coeffs[k + 1]
            # e_j(|z| + r) - e_j(|z|) bounds the perturbation of each coefficient.
            bound_hi = [mpmath.mpf(0)] + bound_hi
            bound_lo = [mpmath.mpf(0)] + bound_lo
            for k in range(len(bound_hi) - 1):
                bound_hi[k] += (a + r) * bound_hi[k + 1]
                bound_lo[k] += a * bound_lo[k + 1]
        slack = mpmath.mpf(2) ** (-prec + 16)
        err = [hi - lo + slack * hi for hi, lo in zip(bound_hi, bound_lo)]
    return coeffs, err


def _conjugation_closed(subset, partner) -> bool:
    s = set(subset)
    return all(partner[i] in s for i in subset)


def find_divisor(p: CharPoly, precision_bits: int = 128) -> tuple | None:
    """A nontrivial monic integer divisor of p, or None if p is irreducible."""
    c = p.coeffs
    n = p.degree
    if n > MAX_DEGREE:
        raise CapacityError(f"degree {n} exceeds the desk-scale limit {MAX_DEGREE}")
    if n <= 1:
        return None
    if c[0] == 0:
        return (0, 1)
    g = P.gcd_poly(c, P.derivative(c))
    if P.degree(g) >= 1:
        return tuple(P.primitive_part(g))
    # Linear divisors: t - r with r | c_0 (rational root theorem).
    for r in _divisors(c[0]):
        for root in (r, -r):
            if P.evaluate(c, root) == 0:
                return (-root, 1)
    if n < 4:
        return None

    bits = precision_bits
    while True:
        try:
            return _search_quadratic_and_up(c, n, bits)
        except PrecisionError:
            if bits >= 1600:
                raise
            bits *= 2


def _search_quadratic_and_up(c, n, bits):
    disks = certified_roots(c, bits)
    centers = [d.center for d in disks]
    radii = [d.radius for d in disks]
    partner = []
    for i, z in enumerate(centers):
        best = min(range(n), key=lambda j: abs(centers[j] - mpmath.conj(z)))
        partner.append(best)
    # Divisor constant terms must divide c_0.
    const_ok = set()
    for dv in _divisors(c[0]):
        const_ok.update((dv, -dv))
    for k in range(2, n // 2 + 1):
        bounds = P.mignotte_bounds(c, k)
        for subset in combinations(range(n), k):
            if not _conjugation_closed(subset, partner):
                continue
            coeffs, err = _subset_poly(centers, radii, subset, bits)
            if any(abs(coeffs[j]) - err[j] > bounds[j] for j in range(k + 1)):
                continue
            if any(e >= 0.25 for e in err):
                raise PrecisionError("root radii too wide to round divisor candidates")
            cand = tuple(int(mpmath.nint(z.real)) for z in coeffs)
            if cand[0] not in const_ok:
                continue
            if P.divides_exactly(cand, c):
                return cand
    return None


def is_irreducible(p: CharPoly, precision_bits: int = 128) -> bool:
    """True iff ``p`` has no monic integer factor of degree 1 <= k < deg p."""
    return find_divisor(p, precision_bits) is None
