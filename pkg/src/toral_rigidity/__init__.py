"""Desk-scale laboratory for local rigidity of hyperbolic toral automorphisms."""

__version__ = "0.1.0"
