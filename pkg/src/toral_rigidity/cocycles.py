"""The derivative cocycle: Lyapunov exponents, invariant flags, bunching, distortion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra.matrix import IntMatrix
from .algebra.roots import spectrum
from .conjugacy import SpectralSplit
from .dynamics import TorusMap, grid_points
from .errors import ConditioningError, IllConditionedError, IndeterminateError

MIN_INTERSECTION_ANGLE = 1e-6


def _qr(a: np.ndarray):
    q, r = np.linalg.qr(a)
    return q, r


def _orthonormal(a: np.ndarray) -> np.ndarray:
    return _qr(a)[0]


def qr_exponents(f: TorusMap, x0: np.ndarray, n: int, burn_in: int = 64) -> np.ndarray:
    """Per-start exponent estimates, shape (m, d), each row sorted descending.

    The frame is aligned over ``burn_in`` unrecorded steps first, so a constant
    cocycle gives log|lambda_i| up to rounding instead of an O(1/n) bias.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    m, d = x.shape
    q = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    acc = np.zeros((m, d))
    for step in range(burn_in + n):
        y, df = f.lift_with_differential(x)
        q, r = _qr(df @ q)
        if step >= burn_in:
            acc += np.log(np.abs(np.diagonal(r, axis1=-2, axis2=-1)))
        x = y - np.floor(y)
    return -np.sort(-acc / n, axis=-1)


def lyapunov_qr(f: TorusMap, x0, n: int, burn_in: int = 64) -> np.ndarray:
    """Exponents chi_1 >= ... >= chi_d along the orbit of a single point."""
    if n < 100:
        raise ValueError("n must be >= 100")
    return qr_exponents(f, np.asarray(x0, dtype=float)[None, :], n, burn_in)[0]


@dataclass(frozen=True)
class CocycleStats:
    exponents: tuple
    stderr: tuple
    n_iters: int
    n_samples: int
    seed: int
    per_sample: np.ndarray = field(repr=False, compare=False)
    bunching_margin: float | None = None
    distortion_max: float | None = None

    @property
    def exponent_sum(self) -> float:
        return float(np.mean(np.sum(self.per_sample, axis=1)))

    @property
    def exponent_sum_stderr(self) -> float:
        s = np.sum(self.per_sample, axis=1)
        return float(np.std(s, ddof=1) / np.sqrt(len(s))) if len(s) > 1 else 0.0

    def positive_sum(self, count: int) -> tuple[float, float]:
        """Mean and standard error of chi_1 + ... + chi_count."""
        s = np.sum(self.per_sample[:, :count], axis=1)
        err = float(np.std(s, ddof=1) / np.sqrt(len(s))) if len(s) > 1 else 0.0
        return float(np.mean(s)), err

    def to_record(self) -> dict:
        return {
            "exponents": list(self.exponents),
            "stderr": list(self.stderr),
            "n_iters": self.n_iters,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "exponent_sum": self.exponent_sum,
            "bunching_margin": self.bunching_margin,
            "distortion_max": self.distortion_max,
        }


def uniform_starts(n_samples: int, d: int, seed: int) -> np.ndarray:
    """Reproducible uniform points from a counter-based Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.random((n_samples, d))


def volume_lyapunov(f: TorusMap, n_samples: int, n: int, seed: int = 0, burn_in: int = 64) -> CocycleStats:
    """Mean and standard error of QR exponents over uniform random starts."""
    starts = uniform_starts(n_samples, f.dim, seed)
    per = qr_exponents(f, starts, n, burn_in)
    mean = per.mean(axis=0)
    err = per.std(axis=0, ddof=1) / np.sqrt(n_samples) if n_samples > 1 else np.zeros(f.dim)
    return CocycleStats(tuple(float(v) for v in mean), tuple(float(v) for v in err), n, n_samples, seed, per)


# Exponent sums of a linear map carry rounding of this order; a zero sample
# spread must not turn it into a mismatch.
MATCH_FLOOR = 1e-9


@dataclass(frozen=True)
class SpectrumMatch:
    """Per modulus class: sum of estimated exponents against m log|lambda|.

    Classes run from the largest modulus down.  Within a class of
    multiplicity > 1 the individual QR exponents carry a common-mode
    finite-n bias from the rotation inside the class, so only class sums
    are compared.
    """

    multiplicities: tuple
    estimated: tuple
    linear: tuple
    stderr: tuple
    matched: bool

    def to_record(self) -> dict:
        return {
            "class_multiplicities": list(self.multiplicities),
            "class_sums": list(self.estimated),
            "linear_class_sums": list(self.linear),
            "class_stderr": list(self.stderr),
            "spectra_matched": self.matched,
        }


def spectrum_match(stats: CocycleStats, L: IntMatrix, k_sigma: float = 2.0, floor: float = MATCH_FLOOR) -> SpectrumMatch:
    spec = spectrum(L)
    classes = list(reversed(spec.moduli))
    est, lin, err, mults = [], [], [], []
    start = 0
    for modulus, m in classes:
        s = np.sum(stats.per_sample[:, start : start + m], axis=1)
        start += m
        mults.append(m)
        est.append(float(np.mean(s)))
        err.append(float(np.std(s, ddof=1) / np.sqrt(len(s))) if len(s) > 1 else 0.0)
        lin.append(float(m * np.log(float(modulus))))
    ok = all(abs(e - l) <= max(k_sigma * se, floor) for e, l, se in zip(est, lin, err))
    return SpectrumMatch(tuple(mults), tuple(est), tuple(lin), tuple(err), ok)


# ---------------------------------------------------------------- sub-bundles


@dataclass(frozen=True)
class FlagLayout:
    """Dimensions of the stable bundle and of the unstable modulus classes of L.

    ``unstable_dims[i]`` is dim E_{i+1}, classes ordered by increasing modulus.
    """

    stable_dim: int
    unstable_dims: tuple
    moduli: tuple

    @classmethod
    def of(cls, L: IntMatrix) -> "FlagLayout":
        spec = spectrum(L)
        stable = sum(m for mod, m in spec.moduli if mod < 1)
        unstable = [(float(mod), m) for mod, m in spec.moduli if mod > 1]
        return cls(stable, tuple(m for _, m in unstable), tuple(mod for mod, _ in unstable))

    @property
    def dim(self) -> int:
        return self.stable_dim + sum(self.unstable_dims)

    def dims(self, kind: str, k: int = 1) -> tuple[int, int]:
        """(dim of the target bundle, dim of the slow complement used) for a kind."""
        ell = len(self.unstable_dims)
        if kind in ("class", "fast", "slow") and not 1 <= k <= ell:
            raise ValueError(f"k must be in [1, {ell}]")
        if kind == "unstable":
            return sum(self.unstable_dims), 0
        if kind == "stable":
            return self.stable_dim, 0
        if kind == "fast":
            return sum(self.unstable_dims[k - 1 :]), 0
        if kind == "slow":
            return sum(self.unstable_dims[:k]), self.stable_dim + sum(self.unstable_dims[:k])
        if kind == "class":
            return self.unstable_dims[k - 1], self.stable_dim + sum(self.unstable_dims[:k])
        raise ValueError(f"unknown kind {kind!r}")


def _random_frames(n: int, d: int, m: int, seed: int = 0) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    return _orthonormal(rng.standard_normal((n, d, m)))


def fast_subspace(f: TorusMap, x: np.ndarray, m: int, n_power: int, seed: int = 0) -> np.ndarray:
    """The m-dim most expanded subspace at x: push a frame along f^{-n}x -> x."""
    x = np.atleast_2d(x)
    back = [x]
    for _ in range(n_power):
        back.append(f.inverse_apply(back[-1]))
    q = _random_frames(len(x), f.dim, m, seed)
    for j in range(n_power, 0, -1):
        q = _orthonormal(f.differential(back[j]) @ q)
    return q


def slow_subspace(f: TorusMap, x: np.ndarray, m: int, n_power: int, seed: int = 1) -> np.ndarray:
    """The m-dim least expanded subspace at x: pull a frame back along x -> f^n x."""
    x = np.atleast_2d(x)
    fwd = [x]
    for _ in range(n_power):
        fwd.append(f.apply(fwd[-1]))
    q = _random_frames(len(x), f.dim, m, seed)
    for j in range(n_power - 1, -1, -1):
        q = _orthonormal(np.linalg.solve(f.differential(fwd[j]), q))
    return q


def intersect(a: np.ndarray, b: np.ndarray, r: int) -> np.ndarray:
    """r-dim intersection of column spans via principal angles (batched).

    Raises IllConditionedError when the (r+1)-th principal angle is below
    ``MIN_INTERSECTION_ANGLE`` (the intersection would not be isolated).
    """
    u, s, vt = np.linalg.svd(np.swapaxes(a, -1, -2) @ b)
    if s.shape[-1] > r:
        angle = np.arccos(np.clip(s[..., r], -1.0, 1.0))
        if np.min(angle) < MIN_INTERSECTION_ANGLE:
            raise IllConditionedError(f"principal angle {np.min(angle):.3g} below {MIN_INTERSECTION_ANGLE}")
    return _orthonormal(b @ np.swapaxes(vt, -1, -2)[..., :r])


def subspace_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Largest principal angle between equal-dimension column spans (batched)."""
    # sin of the largest angle is the norm of the part of b outside span(a);
    # this stays accurate for tiny angles where arccos of a cosine would not.
    resid = b - a @ (np.swapaxes(a, -1, -2) @ b)
    sin = np.linalg.svd(resid, compute_uv=False)[..., 0]
    return np.arcsin(np.clip(sin, 0.0, 1.0))


def estimate_bundle(f: TorusMap, layout: FlagLayout, kind: str, k: int, x: np.ndarray, n_power: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target, slow_dim = layout.dims(kind, k)
    d = layout.dim
    if kind == "stable":
        return slow_subspace(f, x, target, n_power)
    if kind == "unstable":
        return fast_subspace(f, x, target, n_power)
    if kind == "fast":
        return fast_subspace(f, x, target, n_power)
    slow = slow_subspace(f, x, slow_dim, n_power)
    if kind == "slow":
        other = fast_subspace(f, x, d - layout.stable_dim, n_power)
    else:
        other = fast_subspace(f, x, sum(layout.unstable_dims[k - 1 :]), n_power)
    return intersect(slow, other, target)


class SubBundleField:
    """Orthonormal k-frames on a grid, with a rule to evaluate at any point.

    ``at(points)`` recomputes the bundle at arbitrary points; the stored grid
    bases are the values at the grid nodes.
    """

    def __init__(self, grid_n: int, d: int, bases: np.ndarray, rule: Callable | None, label: str = ""):
        self.grid_n = grid_n
        self.d = d
        self.bases = bases
        self.rule = rule
        self.label = label
        self._defect = None

    @classmethod
    def constant(cls, basis, grid_n: int = 8, label: str = "constant") -> "SubBundleField":
        b = _orthonormal(np.asarray(basis, dtype=float))
        d = b.shape[0]
        bases = np.broadcast_to(b, (grid_n**d,) + b.shape).copy()
        return cls(grid_n, d, bases, None, label)

    @classmethod
    def full_space(cls, d: int, grid_n: int = 8) -> "SubBundleField":
        return cls.constant(np.eye(d), grid_n, "full")

    @property
    def rank(self) -> int:
        return self.bases.shape[-1]

    def at(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.rule is None:
            return np.broadcast_to(self.bases[0], (len(pts),) + self.bases.shape[1:]).copy()
        return self.rule(pts)

    @property
    def continuity_defect(self) -> float:
        """Largest principal angle between frames at adjacent grid nodes."""
        if self._defect is None:
            shape = (self.grid_n,) * self.d + self.bases.shape[1:]
            b = self.bases.reshape(shape)
            worst = 0.0
            for axis in range(self.d):
                nb = np.roll(b, -1, axis=axis)
                ang = subspace_angle(b.reshape(-1, *b.shape[-2:]), nb.reshape(-1, *b.shape[-2:]))
                worst = max(worst, float(np.max(ang)))
            self._defect = worst
        return self._defect


def flag_estimate(
    f: TorusMap,
    L: IntMatrix,
    k: int = 1,
    grid_n: int = 32,
    n_power: int = 60,
    kind: str = "class",
) -> SubBundleField:
    """Invariant sub-bundle of f continuing a spectral sub-bundle of L.

    ``kind`` is one of ``class`` (E_k), ``fast`` (E_k + ... + E_l), ``slow``
    (E_1 + ... + E_k), ``stable`` or ``unstable``; k counts unstable modulus
    classes from the slowest.
    """
    layout = FlagLayout.of(L)

    def rule(pts):
        return estimate_bundle(f, layout, kind, k, pts, n_power)

    pts = grid_points(grid_n, L.dim)
    return SubBundleField(grid_n, L.dim, rule(pts), rule, f"{kind}:{k}")


def linear_bundle(L: IntMatrix, kind: str = "class", k: int = 1) -> np.ndarray:
    """Orthonormal basis of the exact spectral sub-bundle of L (numerical eigenbasis)."""
    layout = FlagLayout.of(L)
    split = SpectralSplit.of(L)
    cols = []
    for s, n, _ in split.blocks:
        cols.extend(range(s, s + n))
    # blocks are sorted by modulus, so classes are consecutive column runs
    ds = layout.stable_dim
    bounds = np.cumsum((ds,) + layout.unstable_dims)
    if kind == "stable":
        sel = cols[:ds]
    elif kind == "unstable":
        sel = cols[ds:]
    elif kind == "class":
        sel = cols[bounds[k - 1] : bounds[k]]
    elif kind == "fast":
        sel = cols[bounds[k - 1] :]
    elif kind == "slow":
        sel = cols[ds : bounds[k]]
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return _orthonormal(split.basis[:, sel])


def invariance_defect(f: TorusMap, E: SubBundleField, points) -> float:
    """max angle between Df(E(x)) and E(f x)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    img = _orthonormal(f.differential(pts) @ E.at(pts))
    return float(np.max(subspace_angle(img, E.at(f.apply(pts)))))


# ------------------------------------------------------------------ bunching


def default_rates(exponents, safety: float = 0.9) -> tuple[float, float]:
    """nu, nu_hat from the extreme exponents, pulled 10% toward 1."""
    ex = np.asarray(exponents, dtype=float)
    return float(np.exp(safety * ex.min())), float(np.exp(safety * ex.max()))


def restricted_condition(df: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """||F|| * ||F^{-1}|| for F = Df restricted to span(basis)."""
    s = np.linalg.svd(df @ basis, compute_uv=False)
    return s[..., 0] / s[..., -1]


def bunching_check(
    f: TorusMap,
    beta: float,
    nu: float,
    nu_hat: float,
    grid_n: int,
    E: SubBundleField | None = None,
) -> float:
    """min over the grid of 1 - ||F|| ||F^-1|| max(nu^beta, nu_hat^-beta)."""
    if not nu < 1 < nu_hat:
        raise ValueError("need nu < 1 < nu_hat")
    pts = grid_points(grid_n, f.dim)
    basis = E.at(pts) if E is not None else np.broadcast_to(np.eye(f.dim), (len(pts), f.dim, f.dim))
    cond = restricted_condition(f.differential(pts), basis)
    factor = max(nu**beta, nu_hat ** (-beta))
    return float(np.min(1.0 - cond * factor))


def bunching_sweep(f, nu, nu_hat, grid_n, E=None, betas=tuple(np.round(np.arange(0.1, 1.0, 0.1), 1))):
    return {float(b): bunching_check(f, float(b), nu, nu_hat, grid_n, E) for b in betas}


# ---------------------------------------------------------------- distortion


def transport(f: TorusMap, basis: np.ndarray, x: np.ndarray, n: int):
    """Carry a frame along n steps; yields (point, frame, R) for each step.

    R is F at that step written in the moving orthonormal bases.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    q = basis
    for _ in range(n):
        y, df = f.lift_with_differential(x)
        w = df @ q
        s = np.linalg.svd(w, compute_uv=False)
        if np.min(s[..., -1] / s[..., 0]) < 1e-14:
            raise ConditioningError("transported frame collapsed")
        q, r = _qr(w)
        x = y - np.floor(y)
        yield x, q, r


def distortion_curve(f: TorusMap, E: SubBundleField, points, n_max: int) -> np.ndarray:
    """||F^n|| ||(F^n)^-1|| for n = 1..n_max, shape (n_points, n_max)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    prod = np.broadcast_to(np.eye(E.rank), (len(pts), E.rank, E.rank)).copy()
    out = []
    for _, _, r in transport(f, E.at(pts), pts, n_max):
        prod = r @ prod
        s = np.linalg.svd(prod, compute_uv=False)
        out.append(s[..., 0] / s[..., -1])
    return np.stack(out, axis=-1)


def distortion(f: TorusMap, E: SubBundleField, x, n: int) -> float:
    return float(distortion_curve(f, E, np.atleast_2d(x), n)[0, -1])


@dataclass(frozen=True)
class DistortionTrend:
    slope: float
    max_distortion: float
    mean_log: tuple


def distortion_trend(f: TorusMap, E: SubBundleField, points, n_max: int = 50) -> DistortionTrend:
    """Least-squares slope of the mean log distortion against n."""
    curve = distortion_curve(f, E, points, n_max)
    mean_log = np.mean(np.log(curve), axis=0)
    n = np.arange(1, n_max + 1)
    slope = float(np.polyfit(n, mean_log, 1)[0])
    return DistortionTrend(slope, float(np.max(curve)), tuple(float(v) for v in mean_log))


# ------------------------------------------------------- projective dynamics

FIXED_LINE = "has_fixed_line"
LINE_PAIR = "has_invariant_line_pair"
NEITHER = "neither"


def projective_obstruction(m, tol: float = 1e-10) -> str:
    """Action of an invertible 2x2 matrix on lines through the origin."""
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("need a 2x2 matrix")
    tr, det = np.trace(m), np.linalg.det(m)
    if det == 0:
        raise ValueError("matrix must be invertible")
    disc = tr * tr - 4 * det
    scale = max(1.0, tr * tr, abs(det))
    if abs(disc) < tol * scale:
        raise IndeterminateError("discriminant too close to zero")
    if disc > 0:
        return FIXED_LINE
    if abs(tr) < tol * np.sqrt(scale) and det > 0:
        return LINE_PAIR
    return NEITHER
