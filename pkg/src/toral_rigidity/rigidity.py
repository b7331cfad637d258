"""Quantitative rigidity tests on a computed conjugacy and on periodic data."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .algebra.matrix import IntMatrix
from .algebra.periodic import periodic_points
from .cocycles import SubBundleField, uniform_starts
from .conjugacy import DisplacementField, solve_orbit
from .dynamics import TorusMap, mod1, refine_periodic, to_extended, to_float, torus_delta
from .errors import (
    DerivativeEstimationError,
    InsufficientScaleError,
    LeafPairingError,
    RefinementError,
    ToralError,
)

MAX_PERIOD = 6
MAX_ORBITS_PER_PERIOD = 500


def log_jacobian(f: TorusMap, E: SubBundleField, points, basis=None) -> np.ndarray:
    """log |det| of Df restricted to E, i.e. the sum of log singular values of Df(x) B(x)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    b = E.at(pts) if basis is None else basis
    s = np.linalg.svd(f.differential(pts) @ b, compute_uv=False)
    return np.sum(np.log(s), axis=-1)


def linear_log_det(L: IntMatrix, E_L) -> float:
    """log |det L restricted to the invariant subspace spanned by E_L's columns."""
    q = np.linalg.qr(np.asarray(E_L, dtype=float))[0]
    return float(np.log(abs(np.linalg.det(q.T @ L.to_array() @ q))))


def minimal_orbits(L: IntMatrix, n: int, cap: int = MAX_ORBITS_PER_PERIOD) -> list[tuple]:
    """One exact representative per L-orbit of minimal period n, sorted."""
    m = L.entries
    reps = []
    seen = set()
    for p in periodic_points(L, n, cap=max(cap * n * 4, 10_000)):
        if p in seen:
            continue
        orbit = [p]
        q = p
        while True:
            q = tuple(sum(m[i][j] * q[j] for j in range(len(q))) % 1 for i in range(len(q)))
            if q == p:
                break
            orbit.append(q)
        seen.update(orbit)
        if len(orbit) == n:
            reps.append(min(orbit))
    reps.sort()
    return reps[:cap]


@dataclass(frozen=True)
class OrbitObstruction:
    period: int
    point: tuple
    value: float
    closing_error: float


@dataclass(frozen=True)
class ObstructionReport:
    orbits: tuple
    max_obstruction: float
    counts: dict
    failures: tuple
    reference: float  # log |det L|_{E_L}|

    def to_record(self) -> dict:
        return {
            "max_obstruction": self.max_obstruction,
            "reference_log_det": self.reference,
            "counts": {str(k): v for k, v in self.counts.items()},
            "failures": [list(f) for f in self.failures],
            "orbits": [asdict(o) for o in self.orbits],
        }

    def table(self) -> str:
        lines = [f"{'period':>6}  {'orbits':>6}  {'max obstruction':>16}"]
        for n, c in sorted(self.counts.items()):
            vals = [o.value for o in self.orbits if o.period == n]
            lines.append(f"{n:>6}  {c:>6}  {max(vals) if vals else float('nan'):>16.3e}")
        return "\n".join(lines)


def livsic_obstruction(
    f: TorusMap,
    E: SubBundleField,
    L: IntMatrix,
    E_L,
    max_period: int = 4,
    gauge: np.ndarray | None = None,
    tol: float = 1e-12,
) -> ObstructionReport:
    """|sum_j log Jac(f|E)(f^j p) - n log|det L|_{E_L}|| on periodic orbits of f.

    Orbits of f are located by conjugating exact periodic orbits of L and
    refining with Newton.  ``gauge`` (an orthogonal k x k matrix) rotates the
    frame of E; the result must not depend on it.
    """
    if max_period > MAX_PERIOD:
        raise ValueError(f"max_period is capped at {MAX_PERIOD}")
    ref = linear_log_det(L, E_L)
    results, failures, counts = [], [], {}
    for n in range(1, max_period + 1):
        reps = minimal_orbits(L, n)
        counts[n] = len(reps)
        if not reps:
            continue
        seeds = mod1(solve_orbit(f, L, 30, np.array(reps, dtype=object)).values)
        for rep, seed in zip(reps, seeds):
            try:
                p = refine_periodic(f, seed, n, tol)
            except RefinementError as exc:
                failures.append((n, str(rep), str(exc)))
                warnings.warn(f"period {n} orbit at {rep} skipped: {exc}")
                continue
            orbit = [p]
            for _ in range(n - 1):
                orbit.append(f.apply(orbit[-1]))
            orbit = np.array(orbit)
            closing = float(np.max(np.abs(torus_delta(f.apply(orbit[-1]), p))))
            basis = E.at(orbit)
            if gauge is not None:
                basis = basis @ gauge
            total = float(np.sum(log_jacobian(f, E, orbit, basis)))
            results.append(
                OrbitObstruction(n, tuple(float(c) for c in p), abs(total - n * ref), closing)
            )
    worst = max((o.value for o in results), default=float("nan"))
    return ObstructionReport(tuple(results), worst, counts, tuple(failures), ref)


@dataclass(frozen=True)
class JacobianAverage:
    mean: float
    stderr: float
    n_points: int
    seed: int


def jacobian_average(
    f: TorusMap, E: SubBundleField, L: IntMatrix, E_L, n_points: int = 20000, seed: int = 0
) -> JacobianAverage:
    """Volume average of log Jac(f|E) - log|det L|_{E_L}| with its standard error."""
    pts = uniform_starts(n_points, f.dim, seed)
    vals = log_jacobian(f, E, pts) - linear_log_det(L, E_L)
    return JacobianAverage(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_points)), n_points, seed)


# ------------------------------------------------------------ density ratios


def leaf_pair(f: TorusMap, E: SubBundleField, x, t: float, depth: int = 40, prec: int = 200) -> np.ndarray:
    """A point y on the E-leaf through x at distance about t, as an mpf array.

    Step back to f^{-m} x, move along E there and push forward m steps; the
    short segment straightens onto the leaf.  y is returned at ``prec`` bits
    because rounding it to floats would move it off the leaf.
    """
    with mpmath.workprec(prec):
        back = _iterate_inverse(f, to_extended(np.asarray(x, dtype=float)), depth)
        z = to_float(mod1(back))
        e = E.at(z[None, :])[0][:, 0]
        v = e.copy()
        for _ in range(depth):
            z, df = f.lift_with_differential(z)
            v = df @ v
            z = z - np.floor(z)
        s = t / np.linalg.norm(v)
        return mod1(f.iterate_lift(back + to_extended(s * e), depth))


def _iterate_inverse(f: TorusMap, x, n: int):
    for _ in range(n):
        x = f.inverse_lift(x)
    return x


@dataclass(frozen=True)
class DensityRatio:
    value: float
    depth: int
    tail_bound: float
    contraction: float

    def __float__(self) -> float:
        return self.value


def density_ratio(
    f: TorusMap,
    E: SubBundleField,
    x,
    y,
    tol: float = 1e-10,
    max_depth: int = 60,
    prec: int = 200,
    truncate: bool = True,
) -> DensityRatio:
    """prod_{j>=1} Jac(f|E)(f^{-j} y) / Jac(f|E)(f^{-j} x).

    Backward orbits run at ``prec`` bits so the pair separation is resolved far
    below double precision.  With ``truncate`` the product stops once a factor
    is within ``tol`` of 1; otherwise exactly ``max_depth`` factors are used.
    """
    with mpmath.workprec(prec):
        xs = to_extended(np.asarray(x, dtype=float))
        ys = y if isinstance(y, np.ndarray) and y.dtype == object else to_extended(np.asarray(y, dtype=float))
        bx, by, dist = [], [], []
        cx, cy = xs, ys
        for _ in range(max_depth):
            cx, cy = f.inverse_lift(cx), f.inverse_lift(cy)
            bx.append(to_float(mod1(cx)))
            by.append(to_float(mod1(cy)))
            delta = torus_delta(cy, cx)
            dist.append(float(mpmath.sqrt(sum(c * c for c in delta))))
    dist = np.array(dist)
    d0 = float(np.linalg.norm(to_float(torus_delta(ys, xs))))
    if d0 == 0.0:
        return DensityRatio(1.0, 0, 0.0, 0.0)
    terms = log_jacobian(f, E, np.array(by)) - log_jacobian(f, E, np.array(bx))
    depth = max_depth
    if truncate:
        small = np.nonzero(np.abs(np.expm1(terms)) < tol)[0]
        if len(small):
            depth = int(small[0]) + 1
    # contraction is only required over the factors actually used
    used = dist[: max(depth, 3)]
    steps = np.arange(1, len(used) + 1)
    if np.any(used <= 0):
        raise LeafPairingError("pair separation vanished")
    rate = float(np.exp(np.polyfit(steps, np.log(used), 1)[0]))
    if rate >= 0.95 or np.any(np.diff(np.log(used)) > 0):
        raise LeafPairingError(f"pair does not contract under f^-1 (rate {rate:.3g})")
    log_ratio = float(np.sum(terms[:depth]))
    tail = float(abs(terms[depth - 1]) * rate / (1 - rate))
    return DensityRatio(float(np.exp(log_ratio)), depth, tail, rate)


# -------------------------------------------------------------- regularity


@dataclass(frozen=True)
class RegularityEstimate:
    direction: str
    scales: tuple
    mean_log_dist: tuple
    alpha: float
    band: tuple
    fit_residual: float
    lipschitz: bool
    n_pairs: int

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["scales"] = list(self.scales)
        rec["mean_log_dist"] = list(self.mean_log_dist)
        rec["band"] = list(self.band)
        return rec


def dyadic_scales(grid_n: int, top_exponent: int | None = None, floor_factor: int = 4) -> list[float]:
    """Dyadic scales from the interpolation floor (floor_factor grid steps) up.

    By default the ladder stops at the first power of two at least 100 times
    the floor, the shortest ladder spanning two decades.
    """
    lo = int(np.ceil(np.log2(floor_factor / grid_n)))
    if top_exponent is None:
        top_exponent = lo + int(np.ceil(np.log2(100)))
    return [2.0**k for k in range(lo, top_exponent + 1)]


def _directions(direction, pts, rng, d):
    if direction is None or (isinstance(direction, str) and direction == "global"):
        e = rng.standard_normal((len(pts), d))
        return e / np.linalg.norm(e, axis=1, keepdims=True), "global"
    if isinstance(direction, SubBundleField):
        return direction.at(pts)[:, :, 0], direction.label or "bundle"
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    return np.broadcast_to(e, (len(pts), d)), "vector"


def holder_exponent(
    h: DisplacementField,
    direction=None,
    scales=None,
    n_pairs: int = 1000,
    seed: int = 0,
    n_boot: int = 2000,
    label: str | None = None,
) -> RegularityEstimate:
    """Slope of log |h(x + delta e) - h(x)| against log delta on the lift.

    The same base points x serve every scale (paired design).  The band is the
    2.5-97.5 percentile range of slopes refitted after resampling base points'
    residual vectors, since residuals at one x are correlated across scales.
    """
    if scales is None:
        scales = dyadic_scales(h.grid_n)
    floor = 4 * h.grid_step
    usable = sorted(s for s in scales if s >= floor * (1 - 1e-12))
    if len(usable) < 4 or np.log10(usable[-1] / usable[0]) < 2 - 1e-9:
        raise InsufficientScaleError(f"need >= 4 scales >= {floor:.3g} spanning 2 decades, got {usable}")
    rng = np.random.Generator(np.random.Philox(seed))
    pts = rng.random((n_pairs, h.dim))
    e, tag = _directions(direction, pts, rng, h.dim)
    hx = h.h(pts)
    logd = np.log(np.array(usable))
    data = []
    for s in usable:
        # lifted: h(x + s e) - h(x) = s e + u(x + s e) - u(x)
        diff = s * e + h(pts + s * e) - (hx - pts)
        data.append(np.log(np.linalg.norm(diff, axis=1)))
    data = np.array(data)  # (scales, pairs)
    # One regression over all (scale, pair) observations; with the paired
    # design the residual vectors of a base point are resampled together.
    design = np.vstack([logd, np.ones_like(logd)]).T
    proj = np.linalg.pinv(design)  # (2, n_scales)
    coef = proj @ data.mean(axis=1)
    fitted = design @ coef
    resid = data - fitted[:, None]  # (scales, pairs)
    boot = np.empty(n_boot)
    for i in range(n_boot):
        pick = rng.integers(0, n_pairs, n_pairs)
        boot[i] = coef[0] + (proj @ resid[:, pick].mean(axis=1))[0]
    band = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5)))
    tol = 1e-9
    return RegularityEstimate(
        direction=label or tag,
        scales=tuple(usable),
        mean_log_dist=tuple(float(v) for v in data.mean(axis=1)),
        alpha=float(coef[0]),
        band=band,
        fit_residual=float(np.sqrt(np.mean(resid**2))),
        lipschitz=band[0] - tol <= 1.0 <= band[1] + tol,
        n_pairs=n_pairs,
    )


# ------------------------------------------------------- transfer and flags


def leafwise_derivative(h: DisplacementField, pts, basis, delta: float, scheme: str = "richardson", levels: int = 3):
    """Dh(x) applied to the columns of ``basis``, shape (n, d, k).

    ``richardson`` extrapolates central differences over ``levels`` dyadic
    scales (delta, delta/2, ...); ``forward`` is the plain first-order quotient.
    """
    pts = np.atleast_2d(pts)
    cols = []
    for c in range(basis.shape[-1]):
        e = basis[..., c] if basis.ndim == 3 else np.broadcast_to(basis[:, c], pts.shape)
        if scheme == "forward":
            cols.append((h.h(pts + delta * e) - h.h(pts)) / delta)
            continue
        if scheme != "richardson":
            raise ValueError(scheme)
        table = [(h.h(pts + s * e) - h.h(pts - s * e)) / (2 * s) for s in (delta / 2**i for i in range(levels))]
        # Neville-style elimination of the even error terms.
        for lvl in range(1, levels):
            factor = 4.0**lvl
            table = [(factor * table[i + 1] - table[i]) / (factor - 1) for i in range(len(table) - 1)]
            if lvl == levels - 2:
                prev = table
        est = table[0]
        spread = np.max(np.abs(prev[1] - prev[0])) if levels > 2 else 0.0
        if not np.all(np.isfinite(est)) or spread > 1e-2 * max(1.0, np.max(np.abs(est))):
            raise DerivativeEstimationError(f"Richardson table not converging (spread {spread:.3g})")
        cols.append(est)
    return np.stack(cols, axis=-1)


def transfer_check(
    h: DisplacementField,
    f: TorusMap,
    L: IntMatrix,
    E_L,
    E_f: SubBundleField | None = None,
    n_pts: int = 100,
    delta: float | None = None,
    scheme: str = "richardson",
    seed: int = 0,
) -> float:
    """max_x ||Df(h x) D(x) - D(Lx) L|_E|| / ||D(x)|| with D = Dh along E_L.

    D(x) is kept in ambient coordinates; ``E_f`` is accepted for symmetry with
    the bundle-based checks and, when given, D(x) is projected onto E_f(h(x)).
    """
    if delta is None:
        delta = 8 * h.grid_step
    el = np.linalg.qr(np.asarray(E_L, dtype=float))[0]
    la = L.to_array()
    l_e = el.T @ la @ el
    pts = uniform_starts(n_pts, h.dim, seed)
    lx = mod1(pts @ la.T)
    d_x = leafwise_derivative(h, pts, el, delta, scheme)
    d_lx = leafwise_derivative(h, lx, el, delta, scheme)
    hx = mod1(h.h(pts))
    if E_f is not None:
        bf = E_f.at(hx)
        d_x = bf @ (np.swapaxes(bf, -1, -2) @ d_x)
        bfl = E_f.at(mod1(h.h(lx)))
        d_lx = bfl @ (np.swapaxes(bfl, -1, -2) @ d_lx)
    lhs = f.differential(hx) @ d_x
    rhs = d_lx @ l_e
    num = np.linalg.norm(lhs - rhs, ord=2, axis=(-2, -1))
    den = np.linalg.norm(d_x, ord=2, axis=(-2, -1))
    return float(np.max(num / den))


def flag_transport_check(
    h: DisplacementField,
    L: IntMatrix,
    k: int,
    f_flag: SubBundleField,
    n_pts: int = 100,
    delta: float = 1e-2,
    E_L=None,
    seed: int = 0,
) -> float:
    """max over x of the part of h(x + delta e) - h(x) normal to f_flag(h(x)).

    e is a unit vector in the slow flag E_(1,k) of L (or in ``E_L`` if given);
    the defect is normalized by |h(x + delta e) - h(x)|.
    """
    if delta < 4 * h.grid_step * (1 - 1e-12):
        raise InsufficientScaleError("delta must be at least 4 grid steps")
    if E_L is None:
        from .cocycles import linear_bundle

        E_L = linear_bundle(L, "slow", k)
    el = np.linalg.qr(np.asarray(E_L, dtype=float))[0]
    rng = np.random.Generator(np.random.Philox(seed))
    pts = rng.random((n_pts, h.dim))
    coef = rng.standard_normal((n_pts, el.shape[1]))
    e = coef @ el.T
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    disp = h.h(pts + delta * e) - h.h(pts)
    b = f_flag.at(mod1(h.h(pts)))
    normal = disp - np.einsum("nij,nj->ni", b, np.einsum("nji,nj->ni", b, disp))
    return float(np.max(np.linalg.norm(normal, axis=1) / np.linalg.norm(disp, axis=1)))
