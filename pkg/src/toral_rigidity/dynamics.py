"""Smooth maps of the d-torus built from linear, shear and Fourier nodes.

Points are numpy arrays of shape ``(..., d)``.  Float arrays give standard
precision; object arrays of ``mpmath.mpf`` give extended precision (set the
working precision with ``mpmath.workprec``).  All nodes act on the universal
cover; reduction mod 1 happens only in :meth:`TorusMap.apply`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np

from .algebra.matrix import IntMatrix
from .errors import NonInvertibleError, ParseError, RefinementError

TAU_INV = 1e-12
TAU_PERIODIC = 1e-12
MAX_NEWTON = 50

_mp_sin = np.frompyfunc(mpmath.sin, 1, 1)
_mp_cos = np.frompyfunc(mpmath.cos, 1, 1)
_mp_floor = np.frompyfunc(mpmath.floor, 1, 1)
_mp_nint = np.frompyfunc(mpmath.nint, 1, 1)


def is_extended(x) -> bool:
    return isinstance(x, mpmath.mpf) or (isinstance(x, np.ndarray) and x.dtype == object)


def two_pi(x):
    return 2 * mpmath.pi if is_extended(x) else 2 * np.pi


def sin(x):
    return _mp_sin(x) if is_extended(x) else np.sin(x)


def cos(x):
    return _mp_cos(x) if is_extended(x) else np.cos(x)


def nearest_int(x):
    return _mp_nint(x) if is_extended(x) else np.rint(x)


def mod1(x):
    """Reduce into [0, 1); a float result of exactly 1.0 is folded to 0."""
    if is_extended(x):
        y = x - _mp_floor(x)
        return np.where(y >= 1, y - 1, y)
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x)
    y[y >= 1.0] = 0.0
    return y


def torus_delta(a, b):
    """Shortest lifted displacement from b to a."""
    diff = a - b
    return diff - nearest_int(diff)


def to_extended(x, prec: int | None = None) -> np.ndarray:
    """Object array of mpf values; ``prec`` only affects later arithmetic."""
    x = np.asarray(x)
    out = np.empty(x.shape, dtype=object)
    flat = out.reshape(-1)
    for i, v in enumerate(x.reshape(-1)):
        flat[i] = mpmath.mpf(v) if not isinstance(v, mpmath.mpf) else v
    return out


def to_float(x) -> np.ndarray:
    return np.asarray(x, dtype=float) if is_extended(x) else np.asarray(x)


@dataclass(frozen=True)
class Profile:
    """Scalar periodic profile g(s) = sum a_k sin(2 pi k s) + b_k cos(2 pi k s).

    ``terms`` holds ``(k, a_k, b_k)`` with integer k >= 1, so g has mean zero.
    """

    terms: tuple

    def __post_init__(self):
        terms = tuple((int(k), float(a), float(b)) for k, a, b in self.terms)
        if any(k < 1 for k, _, _ in terms):
            raise ValueError("frequencies must be >= 1 (mean-zero profile)")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def sine(cls, amp: float, freq: int = 1) -> "Profile":
        return cls(((freq, amp, 0.0),))

    def scaled(self, c: float) -> "Profile":
        return Profile(tuple((k, c * a, c * b) for k, a, b in self.terms))

    def __call__(self, s):
        tp = two_pi(s)
        out = 0 * s
        for k, a, b in self.terms:
            if a:
                out = out + a * sin(tp * k * s)
            if b:
                out = out + b * cos(tp * k * s)
        return np.asarray(out, dtype=object) if is_extended(s) else out

    def derivative(self, s):
        tp = two_pi(s)
        out = 0 * s
        for k, a, b in self.terms:
            if a:
                out = out + a * tp * k * cos(tp * k * s)
            if b:
                out = out - b * tp * k * sin(tp * k * s)
        return np.asarray(out, dtype=object) if is_extended(s) else out

    def sup(self) -> float:
        return sum(abs(a) + abs(b) for _, a, b in self.terms)

    def sup_derivative(self) -> float:
        return sum(2 * np.pi * k * (abs(a) + abs(b)) for k, a, b in self.terms)


def kernel_basis(w: Sequence[int]) -> list[tuple[int, ...]]:
    """Integer basis of ker(w): b_j = w_p e_j - w_j e_p for j != p.

    p is the first index with w_p != 0; the list is ordered by j.
    """
    w = tuple(int(c) for c in w)
    p = next((i for i, c in enumerate(w) if c != 0), None)
    if p is None:
        raise ValueError("w must be nonzero")
    basis = []
    for j in range(len(w)):
        if j == p:
            continue
        b = [0] * len(w)
        b[j] += w[p]
        b[p] -= w[j]
        basis.append(tuple(b))
    return basis


class Node:
    """One factor of a torus map acting on the universal cover."""

    volume_exact = False

    def forward(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def backward(self, y, tol: float):
        raise NotImplementedError


@dataclass(frozen=True)
class LinearNode(Node):
    matrix: IntMatrix
    volume_exact = True

    def forward(self, x):
        m = self.matrix.to_object_array() if is_extended(x) else self.matrix.to_array()
        return x @ m.T

    def jacobian(self, x):
        m = self.matrix.to_object_array() if is_extended(x) else self.matrix.to_array()
        return np.broadcast_to(m, x.shape + (x.shape[-1],)).copy()

    def backward(self, y, tol: float = TAU_INV):
        inv = self.matrix.inverse()
        m = inv.to_object_array() if is_extended(y) else inv.to_array()
        return y @ m.T

    def inverse_node(self) -> "LinearNode":
        return LinearNode(self.matrix.inverse())


@dataclass(frozen=True)
class ShearNode(Node):
    """x -> x + v g(w . x) with w . v = 0 exactly, so det = 1 everywhere."""

    w: tuple
    v: tuple
    profile: Profile
    volume_exact = True

    def __post_init__(self):
        w = tuple(int(c) for c in self.w)
        v = tuple(int(c) for c in self.v)
        if len(w) != len(v):
            raise ValueError("w and v must have the same length")
        if sum(a * b for a, b in zip(w, v)) != 0:
            raise ValueError("shear direction v must satisfy w . v = 0")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_kernel(cls, w: Sequence[int], v_index: int, profile: Profile) -> "ShearNode":
        basis = kernel_basis(w)
        if not 0 <= v_index < len(basis):
            raise ValueError(f"v_index must be in [0, {len(basis)})")
        return cls(tuple(w), basis[v_index], profile)

    def _vectors(self, x):
        if is_extended(x):
            return np.array(self.w, dtype=object), np.array(self.v, dtype=object)
        return np.array(self.w, dtype=float), np.array(self.v, dtype=float)

    def forward(self, x):
        w, v = self._vectors(x)
        return x + self.profile(x @ w)[..., None] * v

    def jacobian(self, x):
        w, v = self._vectors(x)
        gp = self.profile.derivative(x @ w)
        eye = np.eye(len(self.w), dtype=object if is_extended(x) else float)
        return eye + gp[..., None, None] * np.outer(v, w)

    def backward(self, y, tol: float = TAU_INV):
        w, v = self._vectors(y)
        return y - self.profile(y @ w)[..., None] * v

    def inverse_node(self) -> "ShearNode":
        return ShearNode(self.w, self.v, self.profile.scaled(-1.0))


@dataclass(frozen=True)
class FourierNode(Node):
    """x -> x + sum_k a_k sin(2 pi k.x) + b_k cos(2 pi k.x) with vector a_k, b_k.

    Not volume preserving in general; used for controls.
    """

    freqs: tuple
    sin_coeffs: tuple
    cos_coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "freqs", tuple(tuple(int(c) for c in k) for k in self.freqs))
        object.__setattr__(self, "sin_coeffs", tuple(tuple(float(c) for c in a) for a in self.sin_coeffs))
        object.__setattr__(self, "cos_coeffs", tuple(tuple(float(c) for c in b) for b in self.cos_coeffs))

    def _arrays(self, x):
        dt = object if is_extended(x) else float
        return (
            np.array(self.freqs, dtype=dt),
            np.array(self.sin_coeffs, dtype=dt),
            np.array(self.cos_coeffs, dtype=dt),
        )

    def forward(self, x):
        k, a, b = self._arrays(x)
        phase = two_pi(x) * (x @ k.T)
        return x + sin(phase) @ a + cos(phase) @ b

    def jacobian(self, x):
        k, a, b = self._arrays(x)
        tp = two_pi(x)
        phase = tp * (x @ k.T)
        # d/dx of a_k sin(2 pi k.x) is 2 pi a_k cos(.) k^T
        ca = tp * (cos(phase)[..., :, None] * a - sin(phase)[..., :, None] * b)
        d = x.shape[-1]
        eye = np.eye(d, dtype=object if is_extended(x) else float)
        return eye + np.einsum("...ki,kj->...ij", ca, k) if not is_extended(x) else eye + _object_outer_sum(ca, k)

    def backward(self, y, tol: float = TAU_INV):
        """Damped Newton from x = y; raises NonInvertibleError after 50 steps."""
        x = y.copy()
        for _ in range(MAX_NEWTON):
            r = self.forward(x) - y
            err = np.max(np.abs(to_float(r))) if r.size else 0.0
            if err < tol:
                return x
            step = np.linalg.solve(to_float(self.jacobian(x)), to_float(r)[..., None])[..., 0]
            if is_extended(x):
                step = to_extended(step)
            x = x - step
        raise NonInvertibleError(f"Fourier node inversion residual {err:.3g} after {MAX_NEWTON} steps")


def _object_outer_sum(ca, k):
    # Object-dtype fallback for einsum("...ki,kj->...ij").
    return np.matmul(np.swapaxes(ca, -1, -2), k)


@dataclass(frozen=True)
class TorusMap:
    """Composition of nodes; ``nodes[0]`` is applied first."""

    nodes: tuple = field(default=())
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @classmethod
    def linear(cls, m: IntMatrix) -> "TorusMap":
        return cls((LinearNode(m),), m.dim)

    @classmethod
    def identity(cls, d: int) -> "TorusMap":
        return cls((), d)

    @classmethod
    def shear(cls, w, v, profile: Profile) -> "TorusMap":
        node = ShearNode(tuple(w), tuple(v), profile)
        return cls((node,), len(node.w))

    def then(self, other: "TorusMap") -> "TorusMap":
        """The map x -> other(self(x))."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return TorusMap(self.nodes + other.nodes, self.dim)

    @property
    def volume_preserving(self) -> bool:
        return all(n.volume_exact for n in self.nodes)

    def linear_part(self) -> IntMatrix:
        """Product of the linear nodes (the homotopy class of the map)."""
        m = IntMatrix.identity(self.dim)
        for n in self.nodes:
            if isinstance(n, LinearNode):
                m = n.matrix @ m
        return m

    def lift(self, x):
        for n in self.nodes:
            x = n.forward(x)
        return x

    def apply(self, x):
        return mod1(self.lift(x))

    def differential(self, x):
        """D_x f by the chain rule; shape ``x.shape + (d,)``."""
        x = np.asarray(x) if not is_extended(x) else x
        d = self.dim
        ext = is_extended(x)
        acc = np.broadcast_to(np.eye(d, dtype=object if ext else float), x.shape + (d,)).copy()
        for n in self.nodes:
            acc = n.jacobian(x) @ acc
            x = n.forward(x)
        return acc

    def lift_with_differential(self, x):
        d = self.dim
        ext = is_extended(x)
        acc = np.broadcast_to(np.eye(d, dtype=object if ext else float), x.shape + (d,)).copy()
        for n in self.nodes:
            acc = n.jacobian(x) @ acc
            x = n.forward(x)
        return x, acc

    def inverse_lift(self, y, tol: float = TAU_INV):
        for n in reversed(self.nodes):
            y = n.backward(y, tol)
        return y

    def inverse_apply(self, y, tol: float = TAU_INV):
        return mod1(self.inverse_lift(y, tol))

    def inverse_map(self) -> "TorusMap":
        """Closed-form inverse; only for maps made of linear and shear nodes."""
        inv = []
        for n in reversed(self.nodes):
            if not hasattr(n, "inverse_node"):
                raise NonInvertibleError("closed-form inverse needs linear and shear nodes only")
            inv.append(n.inverse_node())
        return TorusMap(tuple(inv), self.dim)

    def iterate_lift(self, x, n: int):
        for _ in range(n):
            x = self.lift(x)
        return x


def finite_difference_differential(f: TorusMap, x, step: float = 1e-5) -> np.ndarray:
    """Central differences of the lift; a check on :meth:`TorusMap.differential`."""
    x = np.asarray(x, dtype=float)
    d = f.dim
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        cols.append((f.lift(x + e) - f.lift(x - e)) / (2 * step))
    return np.stack(cols, axis=-1)


def make_conjugated(L: IntMatrix, psi: TorusMap) -> TorusMap:
    """f = psi^{-1} o L o psi; its conjugacy to L homotopic to id is psi^{-1}."""
    if not psi.volume_preserving:
        raise ValueError("psi must be a composition of shear (and linear) nodes")
    if psi.dim != L.dim:
        raise ValueError("dimension mismatch")
    return TorusMap(psi.nodes + (LinearNode(L),) + psi.inverse_map().nodes, L.dim)


def grid_points(grid_n: int, d: int) -> np.ndarray:
    """Uniform grid k / grid_n in [0,1)^d, shape (grid_n**d, d), row-major."""
    axes = np.arange(grid_n) / grid_n
    mesh = np.meshgrid(*([axes] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


@dataclass(frozen=True)
class C1Distance:
    """Grid estimate of the C^1 distance, with its C^0 and derivative parts."""

    c0: float
    c1: float
    grid_step: float

    @property
    def value(self) -> float:
        return self.c0 + self.c1

    def __float__(self) -> float:
        return self.value


def c1_distance(f: TorusMap, L: IntMatrix, grid_n: int = 64, chunk: int = 1 << 16) -> C1Distance:
    """max |f(x) - Lx|_inf (nearest lift) + max ||D_x f - L||_inf over the grid."""
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    pts = grid_points(grid_n, f.dim)
    la = L.to_array()
    c0 = c1 = 0.0
    for s in range(0, len(pts), chunk):
        x = pts[s : s + chunk]
        y, df = f.lift_with_differential(x)
        disp = torus_delta(y, x @ la.T)
        c0 = max(c0, float(np.max(np.abs(disp))))
        c1 = max(c1, float(np.max(np.sum(np.abs(df - la), axis=-1))))
    return C1Distance(c0, c1, 1.0 / grid_n)


def refine_periodic(f: TorusMap, seed, n: int, tol: float = TAU_PERIODIC, max_steps: int = MAX_NEWTON):
    """Newton on x -> f^n(x) - x - k for the integer shift k nearest the seed's.

    Works at float or extended precision, following the dtype of ``seed``.
    """
    x = np.array(seed, dtype=object) if is_extended(seed) else np.array(seed, dtype=float)
    d = f.dim
    eye = np.eye(d)
    for _ in range(max_steps + 1):
        y = x
        jac = np.eye(d, dtype=object if is_extended(x) else float)
        for _ in range(n):
            y, df = f.lift_with_differential(y)
            jac = df @ jac
        r = torus_delta(y, x)
        err = float(np.max(np.abs(to_float(r))))
        if err < tol:
            return mod1(x)
        a = to_float(jac) - eye
        if abs(np.linalg.det(a)) < 1e-12:
            raise RefinementError("D f^n - I is singular at the iterate")
        step = np.linalg.solve(a, to_float(r))
        if is_extended(x):
            x = x - to_extended(step)
        else:
            x = x - step
        if not np.all(np.isfinite(to_float(x))) or np.max(np.abs(step)) > 1.0:
            raise RefinementError("Newton step left the basin")
    raise RefinementError(f"no convergence in {max_steps} Newton steps (residual {err:.3g})")


_SHEAR_KEYS = {"w", "v_index", "amp", "freq"}


def parse_map_text(text: str, base_dir: Path | str = ".", dim: int | None = None) -> TorusMap:
    """Parse a node list, one node per line, first line applied first.

    ``linear <matrix-file>``, ``shear w=<ints> v_index=<int> amp=<real> freq=<int>``
    and ``fourier <coeff-file>``; ``w`` is comma separated.  A Fourier coefficient
    file has one frequency per line: ``k_1..k_d a_1..a_d b_1..b_d``.
    """
    base = Path(base_dir)
    nodes: list[Node] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *args = line.split()
        try:
            if kind == "linear":
                if len(args) != 1:
                    raise ParseError("linear takes one matrix file")
                m = IntMatrix.load(base / args[0])
                nodes.append(LinearNode(m))
            elif kind == "shear":
                kv = dict(a.split("=", 1) for a in args)
                if set(kv) != _SHEAR_KEYS:
                    raise ParseError(f"shear needs keys {sorted(_SHEAR_KEYS)}")
                w = tuple(int(c) for c in kv["w"].split(","))
                prof = Profile.sine(float(kv["amp"]), int(kv["freq"]))
                nodes.append(ShearNode.from_kernel(w, int(kv["v_index"]), prof))
            elif kind == "fourier":
                if len(args) != 1:
                    raise ParseError("fourier takes one coefficient file")
                nodes.append(_load_fourier(base / args[0], dim or _infer_dim(nodes)))
            else:
                raise ParseError(f"unknown node kind {kind!r}")
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        except (ValueError, OSError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    if not nodes and dim is None:
        raise ParseError("empty map file")
    d = dim or _infer_dim(nodes)
    for n in nodes:
        nd = n.matrix.dim if isinstance(n, LinearNode) else len(n.w) if isinstance(n, ShearNode) else len(n.freqs[0])
        if nd != d:
            raise ParseError("nodes disagree on dimension")
    return TorusMap(tuple(nodes), d)


def _infer_dim(nodes) -> int:
    for n in nodes:
        if isinstance(n, LinearNode):
            return n.matrix.dim
        if isinstance(n, ShearNode):
            return len(n.w)
    raise ParseError("cannot infer dimension; put a linear or shear node first")


def _load_fourier(path: Path, d: int) -> FourierNode:
    freqs, a, b = [], [], []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 * d:
            raise ParseError(f"fourier row needs {3 * d} numbers")
        freqs.append(tuple(int(p) for p in parts[:d]))
        a.append(tuple(float(p) for p in parts[d : 2 * d]))
        b.append(tuple(float(p) for p in parts[2 * d :]))
    if not freqs:
        raise ParseError("empty fourier coefficient file")
    return FourierNode(tuple(freqs), tuple(a), tuple(b))


def load_map(path, dim: int | None = None) -> TorusMap:
    p = Path(path)
    return parse_map_text(p.read_text(), p.parent, dim)
