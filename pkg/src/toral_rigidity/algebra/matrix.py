"""Exact integer matrices: the automorphism L and its text format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ParseError
from .poly import CharPoly

Rows = tuple


def identity_rows(d: int) -> Rows:
    return tuple(tuple(int(i == j) for j in range(d)) for i in range(d))


def matmul_rows(a: Rows, b: Rows) -> Rows:
    n, m, p = len(a), len(b), len(b[0])
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(m)) for j in range(p)) for i in range(n)
    )


def matpow_rows(a: Rows, k: int) -> Rows:
    if k < 0:
        raise ValueError("negative power; invert first")
    result = identity_rows(len(a))
    base = a
    while k:
        if k & 1:
            result = matmul_rows(result, base)
        base = matmul_rows(base, base)
        k >>= 1
    return result


def det_bareiss(a: Rows) -> int:
    """Fraction-free Gaussian elimination; exact for arbitrary-size integers."""
    m = [list(r) for r in a]
    n = len(m)
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def adjugate_rows(a: Rows) -> Rows:
    n = len(a)
    if n == 1:
        return ((1,),)
    cof = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = tuple(
                tuple(a[r][c] for c in range(n) if c != j) for r in range(n) if r != i
            )
            cof[i][j] = (-1) ** (i + j) * det_bareiss(minor)
    return tuple(tuple(cof[j][i] for j in range(n)) for i in range(n))


def charpoly_rows(a: Rows) -> tuple:
    """Faddeev-LeVerrier recursion; every division by k is exact over the integers."""
    n = len(a)
    coeffs = [0] * (n + 1)
    coeffs[n] = 1
    mk = tuple(tuple(0 for _ in range(n)) for _ in range(n))
    for k in range(1, n + 1):
        am = matmul_rows(a, mk)
        c_prev = coeffs[n - k + 1]
        mk = tuple(
            tuple(am[i][j] + (c_prev if i == j else 0) for j in range(n)) for i in range(n)
        )
        amk = matmul_rows(a, mk)
        tr = sum(amk[i][i] for i in range(n))
        q, r = divmod(-tr, k)
        assert r == 0, "Faddeev-LeVerrier division must be exact"
        coeffs[n - k] = q
    return tuple(coeffs)


@dataclass(frozen=True)
class IntMatrix:
    """Square integer matrix with determinant +-1 (a toral automorphism).

    ``strict_sl=True`` additionally requires determinant +1.
    """

    entries: Rows
    strict_sl: bool = False
    det: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        rows = tuple(tuple(int(x) for x in r) for r in self.entries)
        d = len(rows)
        if d < 2:
            raise ValueError("dimension must be at least 2")
        if any(len(r) != d for r in rows):
            raise ValueError("matrix must be square")
        det = det_bareiss(rows)
        allowed = (1,) if self.strict_sl else (1, -1)
        if det not in allowed:
            raise ValueError(f"determinant {det} not in {allowed}")
        object.__setattr__(self, "entries", rows)
        object.__setattr__(self, "det", det)

    @classmethod
    def identity(cls, d: int) -> "IntMatrix":
        return cls(identity_rows(d))

    @classmethod
    def companion(cls, coeffs: Sequence[int]) -> "IntMatrix":
        """Companion matrix of the monic polynomial with coefficients c_0..c_d."""
        p = CharPoly(tuple(coeffs))
        d = p.degree
        rows = [[0] * d for _ in range(d)]
        for i in range(1, d):
            rows[i][i - 1] = 1
        for i in range(d):
            rows[i][d - 1] = -p.coeffs[i]
        return cls(tuple(tuple(r) for r in rows))

    @classmethod
    def blockdiag(cls, *blocks: "IntMatrix") -> "IntMatrix":
        d = sum(b.dim for b in blocks)
        rows = [[0] * d for _ in range(d)]
        off = 0
        for b in blocks:
            for i in range(b.dim):
                for j in range(b.dim):
                    rows[off + i][off + j] = b.entries[i][j]
            off += b.dim
        return cls(tuple(tuple(r) for r in rows))

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        return IntMatrix(matmul_rows(self.entries, other.entries))

    def power(self, k: int) -> "IntMatrix":
        if k < 0:
            return self.inverse().power(-k)
        return IntMatrix(matpow_rows(self.entries, k))

    def inverse(self) -> "IntMatrix":
        adj = adjugate_rows(self.entries)
        return IntMatrix(tuple(tuple(self.det * x for x in r) for r in adj))

    def trace(self) -> int:
        return sum(self.entries[i][i] for i in range(self.dim))

    def to_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)

    def to_object_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=object)

    def max_entry(self) -> int:
        return max(abs(x) for r in self.entries for x in r)

    def to_text(self) -> str:
        lines = [str(self.dim)] + [" ".join(str(x) for x in r) for r in self.entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, strict_sl: bool = False) -> "IntMatrix":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        if not lines:
            raise ParseError("empty matrix file")
        try:
            d = int(lines[0])
        except ValueError:
            raise ParseError(f"first line must be the dimension, got {lines[0]!r}") from None
        if len(lines) != d + 1:
            raise ParseError(f"expected {d} matrix rows, found {len(lines) - 1}")
        rows = []
        for n, ln in enumerate(lines[1:], start=2):
            parts = ln.split()
            if len(parts) != d:
                raise ParseError(f"line {n}: expected {d} integers, found {len(parts)}")
            try:
                rows.append(tuple(int(x) for x in parts))
            except ValueError:
                raise ParseError(f"line {n}: non-integer entry in {ln!r}") from None
        try:
            return cls(tuple(rows), strict_sl=strict_sl)
        except ValueError as exc:
            raise ParseError(str(exc)) from None

    @classmethod
    def load(cls, path, strict_sl: bool = False) -> "IntMatrix":
        return cls.from_text(Path(path).read_text(), strict_sl=strict_sl)

    def __str__(self) -> str:
        return "[" + ", ".join("[" + ", ".join(str(x) for x in r) + "]" for r in self.entries) + "]"


def charpoly(m: IntMatrix) -> CharPoly:
    """Exact characteristic polynomial det(tI - m)."""
    return CharPoly(charpoly_rows(m.entries))


def power_charpoly(m: IntMatrix, k: int) -> CharPoly:
    """Characteristic polynomial of m^k via the exact integer power."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return CharPoly(charpoly_rows(matpow_rows(m.entries, k)))


def cayley_hamilton_residual(m: IntMatrix) -> Rows:
    """chi_m evaluated at m; the zero matrix for a correct charpoly."""
    c = charpoly(m).coeffs
    d = m.dim
    acc = tuple(tuple(0 for _ in range(d)) for _ in range(d))
    for coef in reversed(c):
        acc = matmul_rows(acc, m.entries)
        acc = tuple(tuple(acc[i][j] + (coef if i == j else 0) for j in range(d)) for i in range(d))
    return acc
