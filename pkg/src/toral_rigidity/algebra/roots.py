"""Certified roots of integer polynomials and the modulus-class spectrum.

Roots come from Aberth's simultaneous iteration in mpmath.  Each root gets an
inclusion radius ``n |p(z_i)| / prod_{j != i} |z_i - z_j|`` (plus an evaluation
rounding term); when the resulting disks are pairwise disjoint each one
contains exactly one root.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from ..errors import PrecisionError
from . import poly as P
from .matrix import IntMatrix, charpoly, charpoly_rows

MAX_PRECISION_BITS = 400


@dataclass(frozen=True)
class RootDisk:
    center: mpmath.mpc
    radius: mpmath.mpf
    multiplicity: int
    exact: bool = False


def _initial_guesses(coeffs: Sequence[int], n: int) -> list[complex]:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            guesses = np.roots([float(c) for c in reversed(coeffs)])
        if len(guesses) != n or not np.all(np.isfinite(guesses)):
            raise ValueError
    except (ValueError, OverflowError, np.linalg.LinAlgError):
        rad = 1.0 + max(abs(float(c)) for c in coeffs[:-1])
        guesses = rad * np.exp(2j * np.pi * (np.arange(n) + 0.25) / n)
    guesses = list(np.asarray(guesses, dtype=complex))
    # Aberth needs distinct starting points.
    for i in range(n):
        for j in range(i):
            if abs(guesses[i] - guesses[j]) < 1e-9 * (1 + abs(guesses[i])):
                guesses[i] += 1e-6 * (1 + abs(guesses[i])) * np.exp(0.7j * (i + 1))
    return guesses


def _horner(coeffs, z):
    p = mpmath.mpc(0)
    dp = mpmath.mpc(0)
    for c in reversed(coeffs):
        dp = dp * z + p
        p = p * z + c
    return p, dp


def _aberth(coeffs: Sequence[int], prec: int, max_iter: int = 500) -> list[mpmath.mpc]:
    n = len(coeffs) - 1
    with mpmath.workprec(prec):
        z = [mpmath.mpc(g.real, g.imag) for g in _initial_guesses(coeffs, n)]
        tol = mpmath.mpf(2) ** (-prec + 8)
        for _ in range(max_iter):
            biggest = mpmath.mpf(0)
            for i in range(n):
                pz, dpz = _horner(coeffs, z[i])
                if pz == 0:
                    continue
                s = mpmath.fsum(1 / (z[i] - z[j]) for j in range(n) if j != i)
                if dpz == 0:
                    ratio = pz
                else:
                    ratio = pz / dpz
                w = ratio / (1 - ratio * s)
                z[i] -= w
                rel = abs(w) / max(1, abs(z[i]))
                if rel > biggest:
                    biggest = rel
            if biggest < tol:
                break
    return z


def _radii(coeffs: Sequence[int], z: list, prec: int) -> list[mpmath.mpf]:
    n = len(coeffs) - 1
    out = []
    with mpmath.workprec(prec):
        eps = mpmath.mpf(2) ** (-prec + 4)
        for i in range(n):
            pz, _ = _horner(coeffs, z[i])
            mag = mpmath.fsum(abs(c) * abs(z[i]) ** k for k, c in enumerate(coeffs))
            bound = abs(pz) + eps * (2 * n + 2) * mag
            denom = mpmath.mpf(1)
            for j in range(n):
                if j != i:
                    denom *= abs(z[i] - z[j])
            out.append(n * bound / denom if denom > 0 else mpmath.inf)
    return out


def _disjoint(disks: list[RootDisk]) -> bool:
    for i in range(len(disks)):
        for j in range(i):
            if abs(disks[i].center - disks[j].center) <= disks[i].radius + disks[j].radius:
                return False
    return True


def squarefree_roots(coeffs: Sequence[int], prec: int) -> list[tuple[mpmath.mpc, mpmath.mpf]]:
    """Centers and radii for a squarefree integer polynomial at ``prec`` bits."""
    n = len(coeffs) - 1
    if n == 1:
        root = Fraction(-coeffs[0], coeffs[1])
        with mpmath.workprec(prec):
            return [(mpmath.mpc(mpmath.mpf(root.numerator) / root.denominator), mpmath.mpf(0))]
    z = _aberth(coeffs, prec)
    r = _radii(coeffs, z, prec)
    return list(zip(z, r))


def certified_roots(coeffs: Sequence[int], prec: int = 128) -> list[RootDisk]:
    """Distinct roots with multiplicities and disjoint inclusion disks.

    Precision doubles until the disks separate; beyond ``MAX_PRECISION_BITS``
    a ``PrecisionError`` is raised.
    """
    coeffs = P.trim(tuple(int(c) for c in coeffs))
    if P.degree(coeffs) < 1:
        return []
    bits = max(int(prec), 64)
    factors = P.squarefree_decomposition(coeffs)
    while True:
        disks: list[RootDisk] = []
        for fac, mult in factors:
            ints = P.primitive_part(fac)
            exact = len(ints) == 2
            for c, r in squarefree_roots(ints, bits):
                disks.append(RootDisk(c, r, mult, exact))
        if _disjoint(disks) and all(mpmath.isfinite(d.radius) for d in disks):
            return _snap_real(disks, bits)
        if bits >= MAX_PRECISION_BITS * 4:
            raise PrecisionError("root disks fail to separate")
        bits *= 2


def _hits(center, radius, disks: list[RootDisk]) -> list[int]:
    return [j for j, d in enumerate(disks) if abs(center - d.center) <= radius + d.radius]


def _snap_real(disks: list[RootDisk], prec: int) -> list[RootDisk]:
    """Project a center to the real axis when conjugation provably fixes its root."""
    out = []
    with mpmath.workprec(prec):
        for i, d in enumerate(disks):
            if abs(d.center.imag) <= d.radius and _hits(mpmath.conj(d.center), d.radius, disks) == [i]:
                d = RootDisk(mpmath.mpc(d.center.real, 0), d.radius, d.multiplicity, d.exact)
            out.append(d)
    return out


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of an integer matrix grouped into certified modulus classes.

    ``eigenvalues`` repeat each distinct root by its multiplicity; ``classes``
    holds index tuples into ``eigenvalues`` sorted by increasing modulus.
    """

    eigenvalues: tuple
    radii: tuple
    moduli: tuple  # ((modulus, multiplicity), ...) ascending
    classes: tuple
    unit_circle_count: int
    on_circle: tuple
    is_real: tuple
    simple: tuple
    certified_gap: float
    precision_bits: int

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def class_multiplicities(self) -> list[int]:
        return [m for _, m in self.moduli]

    def to_record(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "radii": [float(r) for r in self.radii],
            "moduli": [[float(m), k] for m, k in self.moduli],
            "unit_circle_count": self.unit_circle_count,
            "certified_gap": None if not np.isfinite(self.certified_gap) else float(self.certified_gap),
            "precision_bits": self.precision_bits,
        }


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        self.parent[self.find(i)] = self.find(j)


def _negation_roots(coeffs, disks, prec) -> set[int]:
    """Indices of roots lambda with -lambda also a root (exact gcd test)."""
    g = P.gcd_poly(coeffs, P.negate_argument(coeffs))
    if P.degree(g) < 1:
        return set()
    found = set()
    for d in certified_roots(P.primitive_part(g), prec):
        hit = _hits(d.center, d.radius, disks)
        if len(hit) != 1:
            raise PrecisionError("cannot locate roots of gcd(p(t), p(-t))")
        found.add(hit[0])
    return found


def _is_reciprocal(coeffs) -> bool:
    rev = P.reverse(coeffs)
    return tuple(rev) == tuple(coeffs) or tuple(rev) == tuple(-c for c in coeffs)


def _inversion_verdict(disks: list[RootDisk], i: int) -> bool | None:
    """Unit-circle membership of root i when the root set is closed under z -> 1/conj(z).

    The image disk meeting only disk i gives |lambda| = 1; meeting only some
    other disk gives |lambda| != 1; anything else is undecided.
    """
    d = disks[i]
    if not d.radius < abs(d.center) / 2:
        return None
    c = 1 / mpmath.conj(d.center)
    rad = d.radius / ((abs(d.center) - d.radius) * abs(d.center))
    hit = _hits(c, rad, disks)
    if hit == [i]:
        return True
    if len(hit) == 1:
        return False
    return None


def _circle_via_reciprocal_part(coeffs, disks: list[RootDisk], i: int, prec: int) -> bool | None:
    """Unit-circle roots of p are roots of gcd(p, reverse(p)), which is (anti)reciprocal."""
    g = P.primitive_part(P.gcd_poly(coeffs, P.reverse(coeffs)))
    if P.degree(g) < 1:
        return False
    gdisks = certified_roots(g, prec)
    d = disks[i]
    touching = [j for j, gd in enumerate(gdisks) if abs(gd.center - d.center) <= gd.radius + d.radius]
    if not touching:
        return False
    # The root of g must be pinned to disk i alone before its verdict transfers.
    if len(touching) != 1 or _hits(gdisks[touching[0]].center, gdisks[touching[0]].radius, disks) != [i]:
        return None
    return _inversion_verdict(gdisks, touching[0])


def _product_poly(coeffs) -> tuple:
    """Integer polynomial whose roots are all products lambda_i * lambda_k.

    It is the characteristic polynomial of C (x) C for the companion matrix C.
    """
    c = P.monic(coeffs)
    if any(Fraction(v).denominator != 1 for v in c):
        raise PrecisionError("modulus certification needs a monic integer polynomial")
    n = len(c) - 1
    comp = [[0] * n for _ in range(n)]
    for i in range(1, n):
        comp[i][i - 1] = 1
    for i in range(n):
        comp[i][n - 1] = -int(c[i])
    kron = tuple(
        tuple(comp[i // n][j // n] * comp[i % n][j % n] for j in range(n * n)) for i in range(n * n)
    )
    return charpoly_rows(kron)


def _equal_modulus_labels(coeffs, disks: list[RootDisk], prec: int) -> list[int | None]:
    """Label each root by the isolated root of the product polynomial holding |lambda|^2.

    |lambda|^2 = lambda * conj(lambda) is a root of the product polynomial,
    whose distinct roots sit in disjoint disks; two roots whose squared-modulus
    enclosures meet the same single disk have exactly equal modulus.
    """
    pdisks = certified_roots(_product_poly(coeffs), prec)
    labels = []
    with mpmath.workprec(prec):
        for d in disks:
            a = abs(d.center)
            hit = _hits(a * a, 2 * a * d.radius + d.radius**2, pdisks)
            labels.append(hit[0] if len(hit) == 1 else None)
    return labels


def _classify(coeffs, disks: list[RootDisk], prec: int):
    n = len(disks)
    with mpmath.workprec(prec):
        lo = [abs(d.center) - d.radius for d in disks]
        hi = [abs(d.center) + d.radius for d in disks]
        one = mpmath.mpf(1)
        reciprocal = _is_reciprocal(coeffs)
        on_circle = []
        for i, d in enumerate(disks):
            if d.exact:
                on_circle.append(abs(d.center) == 1)
                continue
            if lo[i] > one or hi[i] < one:
                on_circle.append(False)
                continue
            if reciprocal:
                verdict = _inversion_verdict(disks, i)
            else:
                verdict = _circle_via_reciprocal_part(coeffs, disks, i, prec)
            if verdict is None:
                raise PrecisionError("cannot decide unit-circle membership")
            on_circle.append(verdict)

        uf = _UnionFind(n)
        for i, d in enumerate(disks):
            hit = _hits(mpmath.conj(d.center), d.radius, disks)
            if len(hit) == 1 and hit[0] != i:
                uf.union(i, hit[0])
        circle = [i for i in range(n) if on_circle[i]]
        for a, b in zip(circle, circle[1:]):
            uf.union(a, b)
        overlaps = [
            (i, j) for i in range(n) for j in range(i) if lo[i] <= hi[j] and lo[j] <= hi[i]
        ]
        if any(uf.find(i) != uf.find(j) for i, j in overlaps):
            for i in _negation_roots(coeffs, disks, prec):
                hit = _hits(-disks[i].center, disks[i].radius, disks)
                if len(hit) == 1:
                    uf.union(i, hit[0])
        if any(uf.find(i) != uf.find(j) for i, j in overlaps):
            labels = _equal_modulus_labels(coeffs, disks, prec)
            for i, j in overlaps:
                if labels[i] is not None and labels[i] == labels[j]:
                    uf.union(i, j)
        for i, j in overlaps:
            if uf.find(i) != uf.find(j):
                raise PrecisionError("modulus classes not certified")
        groups: dict[int, list[int]] = {}
        for i in range(n):
            groups.setdefault(uf.find(i), []).append(i)
    return on_circle, list(groups.values()), lo, hi


def spectrum(m: IntMatrix, precision_bits: int = 128) -> SpectrumReport:
    """All eigenvalues of ``m`` with certified radii, grouped by modulus."""
    if precision_bits < 100:
        raise ValueError("precision_bits must be >= 100")
    return spectrum_of_poly(charpoly(m).coeffs, precision_bits)


def spectrum_of_poly(coeffs: Sequence[int], precision_bits: int = 128) -> SpectrumReport:
    coeffs = P.trim(tuple(int(c) for c in coeffs))
    bits = precision_bits
    while True:
        try:
            disks = certified_roots(coeffs, bits)
            on_circle, groups, lo, hi = _classify(coeffs, disks, bits)
            break
        except PrecisionError:
            if bits >= MAX_PRECISION_BITS:
                raise
            bits = min(2 * bits, MAX_PRECISION_BITS)

    with mpmath.workprec(bits):
        keyed = sorted(groups, key=lambda g: min(abs(disks[i].center) for i in g))
        eig, rad, circ, real, simple, classes, moduli = [], [], [], [], [], [], []
        for g in keyed:
            idx = []
            for i in sorted(g, key=lambda i: (-float(disks[i].center.imag), float(disks[i].center.real))):
                d = disks[i]
                for _ in range(d.multiplicity):
                    idx.append(len(eig))
                    eig.append(d.center)
                    rad.append(d.radius)
                    circ.append(on_circle[i])
                    real.append(d.center.imag == 0)
                    simple.append(d.multiplicity == 1)
            classes.append(tuple(idx))
            modulus = mpmath.fsum(abs(disks[i].center) * disks[i].multiplicity for i in g) / len(idx)
            moduli.append((modulus, len(idx)))
        gap = mpmath.inf
        for a, b in zip(keyed, keyed[1:]):
            sep = min(lo[j] for j in b) - max(hi[i] for i in a)
            gap = min(gap, sep)
    return SpectrumReport(
        eigenvalues=tuple(eig),
        radii=tuple(rad),
        moduli=tuple(moduli),
        classes=tuple(classes),
        unit_circle_count=sum(circ),
        on_circle=tuple(circ),
        is_real=tuple(real),
        simple=tuple(simple),
        certified_gap=float(gap),
        precision_bits=bits,
    )
