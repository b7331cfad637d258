"""Solvers for the conjugacy h = id + u with h o L = f o h.

The displacement satisfies u(Lx) = L u(x) + phi(x + u(x)) where phi = f - L on
the lift.  In the real eigenbasis of L the stable part is determined by the
past of an orbit and the unstable part by its future, which gives both a grid
fixed point (``solve_spectral``) and a pointwise two-sided solve along exact
L-orbits (``solve_orbit``).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import ndimage

from .algebra.matrix import IntMatrix
from .dynamics import TorusMap, grid_points, mod1, torus_delta
from .errors import DivergenceError, InversionError, ParseError, PrecisionError, UnsupportedError

UNIT_TOL = 1e-8
STANDARD_MAX_WINDOW = 40
_MAGIC = b"TRDF"


@dataclass(frozen=True)
class SpectralSplit:
    """Real block-diagonal form B = P^{-1} L P with blocks ordered by modulus.

    Real eigenvalues give 1x1 blocks; a complex pair a +- ib gives the block
    [[a, b], [-b, a]] on the span of (Re v, Im v).
    """

    basis: np.ndarray
    inverse: np.ndarray
    blocks: tuple  # ((start, size, modulus), ...)
    block_matrix: np.ndarray

    @classmethod
    def of(cls, L: IntMatrix) -> "SpectralSplit":
        a = L.to_array()
        vals, vecs = np.linalg.eig(a)
        order = np.argsort(np.abs(vals), kind="stable")
        cols, blocks, used = [], [], set()
        for i in order:
            if i in used:
                continue
            lam = vals[i]
            if abs(lam.imag) < 1e-12 * max(1.0, abs(lam)):
                v = np.real(vecs[:, i])
                cols.append(v / np.linalg.norm(v))
                blocks.append((len(cols) - 1, 1, float(abs(lam))))
                used.add(i)
            else:
                j = min(
                    (k for k in range(len(vals)) if k not in used and k != i),
                    key=lambda k: abs(vals[k] - np.conj(lam)),
                )
                if lam.imag < 0:
                    lam, i = vals[j], j
                v = vecs[:, i]
                re, im = np.real(v), np.imag(v)
                scale = np.linalg.norm(np.concatenate([re, im]))
                cols.extend([re / scale, im / scale])
                blocks.append((len(cols) - 2, 2, float(abs(lam))))
                used.update((i, j))
        p = np.stack(cols, axis=1)
        pinv = np.linalg.inv(p)
        b = pinv @ a @ p
        mask = np.zeros_like(b, dtype=bool)
        for s, n, _ in blocks:
            mask[s : s + n, s : s + n] = True
        if np.max(np.abs(b[~mask]), initial=0.0) > 1e-12 * np.max(np.abs(b)) * len(a) ** 2:
            raise UnsupportedError("L is not diagonalizable over the reals in block form")
        b[~mask] = 0.0
        return cls(p, pinv, tuple(blocks), b)

    def indices(self, which: str) -> np.ndarray:
        if which == "stable":
            keep = [b for b in self.blocks if b[2] < 1]
        elif which == "unstable":
            keep = [b for b in self.blocks if b[2] > 1]
        else:
            raise ValueError(which)
        return np.array([s + k for s, n, _ in keep for k in range(n)], dtype=int)

    def check_hyperbolic(self):
        for _, _, mod in self.blocks:
            if abs(mod - 1) < UNIT_TOL:
                raise UnsupportedError("L has an eigenvalue of modulus one; no hyperbolic conjugacy solver")

    def subspace(self, which: str) -> np.ndarray:
        """Orthonormal basis (columns) of the stable or unstable subspace."""
        q, _ = np.linalg.qr(self.basis[:, self.indices(which)])
        return q


@dataclass
class DisplacementField:
    """u on the uniform grid k / grid_n with periodic interpolation.

    ``values`` has shape ``(grid_n,) * d + (d,)``.  ``order`` is 1 for
    multilinear interpolation and 3 for periodic cubic splines.
    """

    values: np.ndarray
    order: int = 1
    meta: dict = field(default_factory=dict)
    _coeffs: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        d = self.values.shape[-1]
        if self.values.ndim != d + 1 or len(set(self.values.shape[:-1])) != 1:
            raise ValueError("values must have shape (grid_n,)*d + (d,)")
        if self.order not in (1, 3):
            raise ValueError("order must be 1 or 3")

    @classmethod
    def zeros(cls, grid_n: int, d: int, order: int = 1) -> "DisplacementField":
        return cls(np.zeros((grid_n,) * d + (d,)), order)

    @classmethod
    def from_function(cls, fn, grid_n: int, d: int, order: int = 1) -> "DisplacementField":
        pts = grid_points(grid_n, d)
        return cls(np.asarray(fn(pts), dtype=float).reshape((grid_n,) * d + (d,)), order)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]

    @property
    def grid_step(self) -> float:
        return 1.0 / self.grid_n

    @property
    def norm_sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1, self.dim)

    def with_order(self, order: int) -> "DisplacementField":
        return DisplacementField(self.values, order, dict(self.meta))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.order == 3:
            return self._cubic(x)
        return self._multilinear(x)

    def _multilinear(self, x):
        n, d = self.grid_n, self.dim
        s = mod1(x) * n
        i0 = np.floor(s).astype(int)
        t = s - i0
        i0 %= n
        i1 = (i0 + 1) % n
        out = np.zeros(x.shape[:-1] + (d,))
        for corner in range(1 << d):
            w = np.ones(x.shape[:-1])
            idx = []
            for a in range(d):
                if corner >> a & 1:
                    w = w * t[..., a]
                    idx.append(i1[..., a])
                else:
                    w = w * (1 - t[..., a])
                    idx.append(i0[..., a])
            out += w[..., None] * self.values[tuple(idx)]
        return out

    def _cubic(self, x):
        if self._coeffs is None:
            self._coeffs = [
                ndimage.spline_filter(self.values[..., c], order=3, mode="grid-wrap") for c in range(self.dim)
            ]
        n = self.grid_n
        coords = (mod1(x) * n).reshape(-1, self.dim).T
        cols = [
            ndimage.map_coordinates(cf, coords, order=3, mode="grid-wrap", prefilter=False) for cf in self._coeffs
        ]
        return np.stack(cols, axis=-1).reshape(x.shape)

    def h(self, x) -> np.ndarray:
        """Lifted value x + u(x)."""
        x = np.asarray(x, dtype=float)
        return x + self(x)

    def to_text(self) -> str:
        lines = [f"{self.dim} {self.grid_n}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.flat()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, order: int = 1) -> "DisplacementField":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        try:
            d, n = (int(t) for t in lines[0].split())
            vals = np.array([[float(t) for t in ln.split()] for ln in lines[1:]])
        except (ValueError, IndexError):
            raise ParseError("malformed displacement field header or body") from None
        if vals.shape != (n**d, d):
            raise ParseError(f"expected {n**d} rows of {d} values")
        return cls(vals.reshape((n,) * d + (d,)), order)

    def to_bytes(self) -> bytes:
        """Magic ``TRDF``, little-endian uint32 d and grid_n, then float64 values."""
        head = _MAGIC + struct.pack("<II", self.dim, self.grid_n)
        return head + self.values.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes, order: int = 1) -> "DisplacementField":
        if data[:4] != _MAGIC or len(data) < 12:
            raise ParseError("not a displacement field (bad magic)")
        d, n = struct.unpack("<II", data[4:12])
        body = np.frombuffer(data[12:], dtype="<f8")
        if body.size != n**d * d:
            raise ParseError("truncated displacement field")
        return cls(body.reshape((n,) * d + (d,)).astype(float), order)

    def save(self, path, binary: bool = False):
        p = Path(path)
        if binary:
            p.write_bytes(self.to_bytes())
        else:
            p.write_text(self.to_text())

    @classmethod
    def load(cls, path, order: int = 1) -> "DisplacementField":
        p = Path(path)
        data = p.read_bytes()
        if data[:4] == _MAGIC:
            return cls.from_bytes(data, order)
        return cls.from_text(data.decode(), order)


def grid_permutation(L: IntMatrix, grid_n: int) -> np.ndarray:
    """Index of L x mod 1 for every node x of the grid (exact integer arithmetic)."""
    d = L.dim
    idx = np.stack(np.meshgrid(*([np.arange(grid_n)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    img = (idx @ np.array(L.entries, dtype=np.int64).T) % grid_n
    return np.ravel_multi_index(tuple(img.T), (grid_n,) * d)


def _phi(f: TorusMap, L: np.ndarray, y: np.ndarray) -> np.ndarray:
    return f.lift(y) - y @ L.T


@dataclass(frozen=True)
class SolverReport:
    sweeps: int
    last_change: float
    changes: tuple
    residual: float


def solve_spectral(
    f: TorusMap,
    L: IntMatrix,
    grid_n: int = 128,
    tol: float = 1e-9,
    max_sweeps: int = 500,
    initial: DisplacementField | None = None,
) -> DisplacementField:
    """Fixed point of the split functional equation on the grid.

    Stable coordinates are pushed forward along L, unstable ones pulled back;
    because L permutes the grid nodes no interpolation enters the sweep.
    """
    split = SpectralSplit.of(L)
    split.check_hyperbolic()
    d = L.dim
    la = L.to_array()
    pts = grid_points(grid_n, d)
    fwd = grid_permutation(L, grid_n)
    bwd = np.empty_like(fwd)
    bwd[fwd] = np.arange(len(fwd))
    st, un = split.indices("stable"), split.indices("unstable")
    b = split.block_matrix
    bs = b[np.ix_(st, st)]
    bu_inv = np.linalg.inv(b[np.ix_(un, un)])

    u = np.zeros_like(pts) if initial is None else initial.flat().copy()
    c = u @ split.inverse.T
    changes: list[float] = []
    rising = 0
    for sweep in range(1, max_sweeps + 1):
        psi = _phi(f, la, pts + u) @ split.inverse.T
        new = np.empty_like(c)
        new[:, st] = c[bwd][:, st] @ bs.T + psi[bwd][:, st]
        new[:, un] = (c[fwd][:, un] - psi[:, un]) @ bu_inv.T
        u_new = new @ split.basis.T
        change = float(np.max(np.abs(u_new - u)))
        changes.append(change)
        c, u = new, u_new
        if change < tol:
            break
        rising = rising + 1 if len(changes) > 1 and change > changes[-2] else 0
        if rising >= 5:
            raise DivergenceError(f"sweep change grew 5 times in a row (now {change:.3g})")
        if not np.isfinite(change):
            raise DivergenceError("non-finite iterate")
    else:
        raise DivergenceError(f"no convergence in {max_sweeps} sweeps (change {changes[-1]:.3g})")

    field_ = DisplacementField(u.reshape((grid_n,) * d + (d,)))
    field_.meta["report"] = SolverReport(sweep, changes[-1], tuple(changes), residual(field_, f, L))
    return field_


def residual(h: DisplacementField, f: TorusMap, L: IntMatrix, refine: int = 1) -> float:
    """max over a grid of the torus distance between h(Lx) and f(h(x)).

    ``refine`` multiplies the evaluation grid resolution; at refine = 1 the
    points Lx are grid nodes of h itself.
    """
    pts = grid_points(h.grid_n * refine, h.dim)
    la = L.to_array()
    lhs = h.h(mod1(pts @ la.T))
    rhs = f.lift(h.h(pts))
    return float(np.max(np.abs(torus_delta(lhs, rhs))))


def exact_orbit(L: IntMatrix, x, steps: range) -> dict[int, np.ndarray]:
    """L^k x mod 1 for every k in ``steps``, computed exactly.

    Entries of x may be floats (dyadic rationals) or ``Fraction`` values; each
    point is carried as an integer vector modulo its common denominator.
    """
    rows = [[Fraction(v) for v in r] for r in np.atleast_2d(np.asarray(x, dtype=object))]
    dens = [math.lcm(*(v.denominator for v in r)) for r in rows]
    nums = [[int(v * q) % q for v in r] for r, q in zip(rows, dens)]

    def push(vecs, m):
        return [
            [sum(m[i][j] * v[j] for j in range(len(v))) % q for i in range(len(v))]
            for v, q in zip(vecs, dens)
        ]

    def as_float(vecs):
        return np.array([[v / q for v in r] for r, q in zip(vecs, dens)], dtype=float)

    out = {0: as_float(nums)}
    cur = nums
    for k in range(1, max(max(steps), 0) + 1):
        cur = push(cur, L.entries)
        out[k] = as_float(cur)
    cur, inv = nums, L.inverse().entries
    for k in range(1, max(-min(steps), 0) + 1):
        cur = push(cur, inv)
        out[-k] = as_float(cur)
    return out


@dataclass(frozen=True)
class OrbitSolution:
    points: np.ndarray
    values: np.ndarray  # lifted h(x) = x + u(x)
    increments: np.ndarray  # (n_points, n_max - 1) sup |h_{n+1} - h_n|
    contraction: float  # fitted geometric rate of the increment envelope for n >= 5
    window: int


def _shoot(f, la, split, orbit, n, u0=None, tol=1e-15, max_iter=200):
    """Two-sided fixed point on the window [-n, n] with u_s(-n) = 0, u_u(n) = 0."""
    ks = list(range(-n, n + 1))
    z = np.stack([orbit[k] for k in ks], axis=1)  # (m, 2n+1, d)
    st, un = split.indices("stable"), split.indices("unstable")
    b = split.block_matrix
    bs = b[np.ix_(st, st)]
    bu_inv = np.linalg.inv(b[np.ix_(un, un)])
    u = np.zeros_like(z) if u0 is None else u0.copy()
    for _ in range(max_iter):
        psi = _phi(f, la, z + u) @ split.inverse.T
        c = np.zeros_like(u)
        for i in range(1, len(ks)):
            c[:, i, st] = c[:, i - 1, st] @ bs.T + psi[:, i - 1, st]
        for i in range(len(ks) - 2, -1, -1):
            c[:, i, un] = (c[:, i + 1, un] - psi[:, i, un]) @ bu_inv.T
        new = c @ split.basis.T
        change = np.max(np.abs(new - u))
        u = new
        if change < tol:
            break
    else:
        raise DivergenceError(f"orbit shooting did not converge (change {change:.3g})")
    return u


def solve_orbit(
    f: TorusMap,
    L: IntMatrix,
    n_max: int,
    sample,
    precision_bits: int | None = None,
) -> OrbitSolution:
    """h at sample points from exact L-orbits over windows [-n, n], n = 1..n_max.

    The windowed value h_n(x) converges geometrically to h(x); the Cauchy
    increments are returned alongside.  Sample points are floats (dyadic
    rationals) or ``Fraction`` values; their L-orbits are computed exactly.
    """
    split = SpectralSplit.of(L)
    split.check_hyperbolic()
    rho = max(m for _, _, m in split.blocks)
    bits_needed = int(np.ceil(n_max * np.log2(rho))) + 20
    if precision_bits is None and n_max > STANDARD_MAX_WINDOW:
        raise PrecisionError(f"n_max {n_max} exceeds the standard-precision window {STANDARD_MAX_WINDOW}")
    if precision_bits is not None and (n_max > 120 or bits_needed > precision_bits):
        raise PrecisionError(f"window {n_max} needs {bits_needed} bits, budget {precision_bits}")
    exact = np.atleast_2d(np.asarray(sample, dtype=object))
    orbit = exact_orbit(L, exact, range(-n_max, n_max + 1))
    x = orbit[0]
    la = L.to_array()
    values, prev = [], None
    for n in range(1, n_max + 1):
        u0 = None
        if prev is not None:
            u0 = np.zeros((len(x), 2 * n + 1, L.dim))
            u0[:, 1:-1] = prev
        prev = _shoot(f, la, split, orbit, n, u0)
        values.append(x + prev[:, n])
    values = np.stack(values, axis=1)
    inc = np.max(np.abs(np.diff(values, axis=1)), axis=-1)
    return OrbitSolution(x, values[:, -1], inc, increment_rate(inc), n_max)


def increment_rate(inc: np.ndarray, start: int = 5, floor: float = 1e-13) -> float:
    """Geometric decay rate of the sample-sup increments from ``start`` on.

    Single-point increments oscillate with where the orbit lands, so the rate
    is exp of the log-linear slope of the envelope max_x |h_{n+1} - h_n|.
    """
    env = np.max(inc, axis=0)
    n = np.arange(len(env))
    keep = (n >= start - 1) & (env > floor)
    if keep.sum() < 3:
        return 0.0
    slope = np.polyfit(n[keep], np.log(env[keep]), 1)[0]
    return float(np.exp(slope))


def invert(h: DisplacementField, tol: float = 1e-12, damping: float = 1.0, max_iter: int = 200) -> DisplacementField:
    """Displacement w of h^{-1} = id + w via w <- (1 - a) w - a u(x + w)."""
    if h.norm_sup >= 0.5:
        raise InversionError("sup |u| must be below 1/2")
    pts = grid_points(h.grid_n, h.dim)
    w = -h(pts)
    for _ in range(max_iter):
        new = (1 - damping) * w - damping * h(pts + w)
        change = float(np.max(np.abs(new - w)))
        w = new
        if change < tol:
            return DisplacementField(w.reshape(h.values.shape), h.order)
        if not np.isfinite(change):
            break
    raise InversionError("fixed point for the inverse did not converge")
