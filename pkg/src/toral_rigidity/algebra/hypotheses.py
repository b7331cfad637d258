"""Eligibility of an integer matrix for the two rigidity theorems."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from . import poly as P
from .irreducible import is_irreducible
from .matrix import IntMatrix, charpoly, power_charpoly
from .roots import SpectrumReport, spectrum

THM1 = "thm1-eligible"
THM2 = "thm2-eligible"
NEITHER = "neither"

# First-failed-check attribution order for the hyperbolic theorem.
FAILURE_ORDER = ("non-hyperbolic", "reducible", "L4-reducible", "three-same-modulus")


def has_negation_pair(coeffs) -> bool:
    """Some lambda with -lambda also a root: gcd(chi(t), chi(-t)) nonconstant."""
    return P.degree(P.gcd_poly(coeffs, P.negate_argument(coeffs))) >= 1


def has_imaginary_pair(coeffs) -> bool:
    """A purely imaginary pair +-iy (y real, nonzero) among the roots.

    With chi(t) = E(t^2) + t O(t^2), chi(iy) = 0 forces E(s) = O(s) = 0 at
    s = -y^2, so we count negative real roots of gcd(E, O) with Sturm chains.
    """
    even, odd = P.even_odd_parts(coeffs)
    if P.degree(odd) < 0:
        g = P.monic(even)
    else:
        g = P.gcd_poly(even, odd)
    if P.degree(g) < 1:
        return False
    return P.count_real_roots(g, None, 0) - (1 if P.evaluate(g, 0) == 0 else 0) > 0


def squarefree_degree(coeffs) -> int:
    """Number of distinct complex roots."""
    return sum(P.degree(f) for f, _ in P.squarefree_decomposition(coeffs))


def has_fourth_power_collision(coeffs, coeffs4) -> bool:
    """Two distinct roots with equal fourth powers (ratio -1, i or -i).

    ``coeffs4`` is the characteristic polynomial of the fourth power.
    """
    return squarefree_degree(coeffs4) < squarefree_degree(coeffs)


def has_root_of_unity(coeffs) -> bool:
    return bool(P.cyclotomic_factors(coeffs))


@dataclass(frozen=True)
class HypothesisReport:
    """Flags and verdict; ``to_record`` gives the stable serialized key set."""

    matrix: tuple
    charpoly: tuple
    irreducible: bool
    l4_irreducible: bool
    totally_irreducible: bool
    no_three_same_modulus: bool
    forbidden_pairs_present: bool
    negation_pair: bool
    imaginary_pair: bool
    root_of_unity: bool
    hyperbolic: bool
    two_on_circle: bool
    real_simple_off_circle: bool
    unit_circle_count: int
    modulus_multiplicities: tuple
    verdict: str
    reason: str | None
    thm1_failures: tuple = field(default=())
    thm2_failures: tuple = field(default=())
    remark1_consistent: bool = True
    fourth_power_collision: bool = False

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["matrix"] = [list(r) for r in self.matrix]
        rec["charpoly"] = list(self.charpoly)
        rec["modulus_multiplicities"] = list(self.modulus_multiplicities)
        rec["thm1_failures"] = list(self.thm1_failures)
        rec["thm2_failures"] = list(self.thm2_failures)
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    def table(self) -> str:
        rows = [
            ("matrix", str(list(list(r) for r in self.matrix))),
            ("charpoly", P.format_poly(self.charpoly)),
            ("irreducible", self.irreducible),
            ("L^4 irreducible", self.l4_irreducible),
            ("totally irreducible", self.totally_irreducible),
            ("no three same modulus", self.no_three_same_modulus),
            ("forbidden pairs", self.forbidden_pairs_present),
            ("hyperbolic", self.hyperbolic),
            ("eigenvalues on circle", self.unit_circle_count),
            ("real simple off circle", self.real_simple_off_circle),
            ("modulus multiplicities", list(self.modulus_multiplicities)),
            ("verdict", self.verdict),
            ("reason", self.reason or "-"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def check_hypotheses(m: IntMatrix, precision_bits: int = 128, spec: SpectrumReport | None = None) -> HypothesisReport:
    chi = charpoly(m).coeffs
    d = m.dim
    irreducible = is_irreducible(P.CharPoly(chi))
    chi4 = power_charpoly(m, 4)
    l4_irreducible = is_irreducible(chi4)
    collision = has_fourth_power_collision(chi, chi4.coeffs)
    neg = has_negation_pair(chi)
    imag = has_imaginary_pair(chi)
    forbidden = neg or imag
    unity = has_root_of_unity(chi)
    tn = any(P.is_poly_in_tn(chi, n) for n in range(2, d + 1))
    totally = irreducible and not unity and not tn

    if spec is None:
        spec = spectrum(m, precision_bits)
    mults = tuple(spec.class_multiplicities())
    hyperbolic = spec.unit_circle_count == 0
    no_three = max(mults) <= 2
    two_on_circle = spec.unit_circle_count == 2
    off = [i for i in range(spec.dim) if not spec.on_circle[i]]
    real_simple = all(spec.is_real[i] and spec.simple[i] for i in off)

    checks1 = {
        "non-hyperbolic": not hyperbolic,
        "reducible": not irreducible,
        "L4-reducible": irreducible and not l4_irreducible,
        "three-same-modulus": not no_three,
    }
    thm1_failures = tuple(k for k in FAILURE_ORDER if checks1[k])
    checks2 = {
        "not-totally-irreducible": not totally,
        "circle-count-not-two": not two_on_circle,
        "off-circle-not-real-simple": not real_simple,
    }
    thm2_failures = tuple(k for k, bad in checks2.items() if bad)

    if not thm1_failures:
        verdict = THM1
    elif not thm2_failures:
        verdict = THM2
    else:
        verdict = NEITHER
    reason = thm1_failures[0] if verdict == NEITHER else None

    return HypothesisReport(
        matrix=m.entries,
        charpoly=chi,
        irreducible=irreducible,
        l4_irreducible=l4_irreducible,
        totally_irreducible=totally,
        no_three_same_modulus=no_three,
        forbidden_pairs_present=forbidden,
        negation_pair=neg,
        imaginary_pair=imag,
        root_of_unity=unity,
        hyperbolic=hyperbolic,
        two_on_circle=two_on_circle,
        real_simple_off_circle=real_simple,
        unit_circle_count=spec.unit_circle_count,
        modulus_multiplicities=mults,
        verdict=verdict,
        reason=reason,
        thm1_failures=thm1_failures,
        thm2_failures=thm2_failures,
        remark1_consistent=l4_irreducible == (irreducible and not forbidden),
        fourth_power_collision=collision,
    )
