"""Exact integer-matrix and integer-polynomial layer."""

from .hypotheses import HypothesisReport, check_hypotheses
from .irreducible import find_divisor, is_irreducible
from .matrix import IntMatrix, cayley_hamilton_residual, charpoly, power_charpoly
from .periodic import periodic_count, periodic_points
from .poly import CharPoly, is_poly_in_tn
from .roots import SpectrumReport, spectrum, spectrum_of_poly

__all__ = [
    "CharPoly",
    "HypothesisReport",
    "IntMatrix",
    "SpectrumReport",
    "cayley_hamilton_residual",
    "charpoly",
    "check_hypotheses",
    "find_divisor",
    "is_irreducible",
    "is_poly_in_tn",
    "periodic_count",
    "periodic_points",
    "power_charpoly",
    "spectrum",
    "spectrum_of_poly",
]
