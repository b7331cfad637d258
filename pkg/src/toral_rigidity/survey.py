"""How often bounded-norm unimodular matrices fail the hyperbolic rigidity hypotheses.

Two sources of matrices:

* ``enumerate_sl``: every 2x2 integer matrix with max-entry norm <= T and
  determinant +-1, in lexicographic order of ``(a, b, c, d)``.
* ``sample_sl``: random products of elementary matrices ``I +- E_ij`` with the
  product rejected when an entry exceeds T.  This law is not uniform on the
  norm ball; every row built from it carries ``SAMPLE_CAVEAT``.

Failures are attributed to the first failed check in ``FAILURE_ORDER``.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .algebra.hypotheses import FAILURE_ORDER
from .algebra.irreducible import is_irreducible
from .algebra.matrix import IntMatrix, charpoly, power_charpoly
from .algebra.roots import spectrum
from .errors import CapacityError, FitError

SAMPLE_CAVEAT = "random elementary product law, not uniform on the norm ball"
NORMS = ("max", "operator")
MAX_REJECTION = 0.999
# Below this |delta| the fitted power law is reported as non-decaying.
DELTA_TOL = 1e-12


def _operator_norm_ok(rows, T: int) -> bool:
    return float(np.linalg.norm(np.array(rows, dtype=float), 2)) <= T * (1 + 1e-12)


def enumerate_sl(d: int, T: int, norm: str = "max") -> Iterator[IntMatrix]:
    """All det +-1 matrices with entries in [-T, T], lexicographically.

    With ``norm="operator"`` the stream is further filtered to spectral norm
    <= T (a subset, since the max entry never exceeds the operator norm).
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    if d != 2:
        raise CapacityError(f"full enumeration is only feasible for d = 2; use sample mode for d = {d}")
    if T < 0:
        raise ValueError("T must be non-negative")
    for a in range(-T, T + 1):
        for b in range(-T, T + 1):
            for c in range(-T, T + 1):
                bc = b * c
                if a == 0:
                    # det = -bc, independent of the last entry.
                    ds = range(-T, T + 1) if abs(bc) == 1 else ()
                else:
                    ds = sorted({q for r in (bc - 1, bc + 1) for q, rem in [divmod(r, a)] if rem == 0 and abs(q) <= T})
                for dd in ds:
                    rows = ((a, b), (c, dd))
                    if norm == "operator" and not _operator_norm_ok(rows, T):
                        continue
                    yield IntMatrix(rows)


def default_max_length(d: int, T: int) -> int:
    # Enough factors to reach entries of size T along a generic word.
    return d * d * max(1, math.ceil(math.log2(T + 1)))


def sample_sl(d: int, T: int, n: int, seed: int, max_length: int | None = None, norm: str = "max") -> Iterator[IntMatrix]:
    """``n`` seeded products of 1..max_length elementary factors with norm <= T."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 2:
        raise ValueError("d must be >= 2")
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    length = default_max_length(d, T) if max_length is None else max_length
    rng = np.random.default_rng(seed)
    accepted = 0
    tried = 0
    while accepted < n:
        tried += 1
        if tried > 1000 and 1 - accepted / tried > MAX_REJECTION:
            raise CapacityError(f"rejection rate above {MAX_REJECTION} for d={d}, T={T}; lower max_length or raise T")
        steps = int(rng.integers(1, length + 1))
        rows = [[int(i == j) for j in range(d)] for i in range(d)]
        ok = True
        for _ in range(steps):
            i, j = (int(v) for v in rng.choice(d, size=2, replace=False))
            s = 1 if rng.integers(0, 2) else -1
            # Left multiplication by I + s E_ij adds s * row j to row i.
            rows[i] = [x + s * y for x, y in zip(rows[i], rows[j])]
            if max(abs(x) for x in rows[i]) > T:
                ok = False
                break
        if not ok:
            continue
        if norm == "operator" and not _operator_norm_ok(rows, T):
            continue
        accepted += 1
        yield IntMatrix(rows)


def classify(m: IntMatrix, precision_bits: int = 128) -> str | None:
    """First failed hyperbolic-theorem check, or None when all pass."""
    spec = spectrum(m, precision_bits)
    if spec.unit_circle_count > 0:
        return "non-hyperbolic"
    if not is_irreducible(charpoly(m), precision_bits):
        return "reducible"
    if not is_irreducible(power_charpoly(m, 4), precision_bits):
        return "L4-reducible"
    if max(spec.class_multiplicities()) > 2:
        return "three-same-modulus"
    return None


def _classify_rows(rows) -> str | None:
    return classify(IntMatrix(rows))


@dataclass(frozen=True)
class SurveyRow:
    T: int
    d: int
    mode: str
    n_total: int
    n_fail: dict
    fail_fraction: float
    stderr: float
    seed: int | None = None
    norm: str = "max"
    caveat: str | None = None

    @property
    def n_failed(self) -> int:
        return sum(self.n_fail.values())

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["n_fail"] = {k: self.n_fail[k] for k in FAILURE_ORDER}
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def survey_row(
    matrices: Iterable[IntMatrix],
    T: int,
    d: int,
    mode: str,
    seed: int | None = None,
    norm: str = "max",
    threads: int = 1,
) -> SurveyRow:
    """Classify a matrix stream; worker results are re-aggregated in stream order."""
    mats = list(matrices)
    if threads > 1 and len(mats) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reasons = list(pool.map(_classify_rows, [m.entries for m in mats], chunksize=64))
    else:
        reasons = [classify(m) for m in mats]
    counts = {k: 0 for k in FAILURE_ORDER}
    for r in reasons:
        if r is not None:
            counts[r] += 1
    total = len(mats)
    failed = sum(counts.values())
    p = failed / total if total else 0.0
    se = math.sqrt(p * (1 - p) / total) if total else 0.0
    return SurveyRow(
        T=T,
        d=d,
        mode=mode,
        n_total=total,
        n_fail=counts,
        fail_fraction=p,
        stderr=se,
        seed=seed if mode == "sample" else None,
        norm=norm,
        caveat=SAMPLE_CAVEAT if mode == "sample" else None,
    )


def run_survey(
    d: int,
    Ts: Sequence[int],
    mode: str = "enumerate",
    n: int = 10000,
    seed: int = 0,
    norm: str = "max",
    threads: int = 1,
) -> list[SurveyRow]:
    if mode not in ("enumerate", "sample"):
        raise ValueError("mode must be 'enumerate' or 'sample'")
    rows = []
    for T in Ts:
        if mode == "enumerate":
            mats = enumerate_sl(d, T, norm)
        else:
            mats = sample_sl(d, T, n, seed, norm=norm)
        rows.append(survey_row(mats, T, d, mode, seed=seed, norm=norm, threads=threads))
    return rows


@dataclass(frozen=True)
class DecayFit:
    c: float
    delta: float
    residual: float
    n_rows: int
    excluded: tuple = field(default=())

    @property
    def decaying(self) -> bool:
        return self.delta > DELTA_TOL

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["excluded"] = list(self.excluded)
        rec["decaying"] = self.decaying
        return rec


def decay_fit(rows: Sequence[SurveyRow]) -> DecayFit:
    """Least squares of log fail_fraction against log T for ``c T^-delta``.

    ``residual`` is the root-mean-square log-space residual.
    """
    usable = [r for r in rows if r.fail_fraction > 0]
    excluded = tuple(r.T for r in rows if r.fail_fraction <= 0)
    if excluded:
        warnings.warn(f"rows with zero fail fraction excluded from the fit: T={list(excluded)}", stacklevel=2)
    if len(usable) < 3:
        raise FitError(f"decay fit needs at least 3 rows with positive fail fraction, got {len(usable)}")
    Ts = [r.T for r in usable]
    if any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise FitError("rows must have strictly increasing T")
    x = np.log(np.array(Ts, dtype=float))
    y = np.log(np.array([r.fail_fraction for r in usable]))
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    delta = float(-coef[1])
    if abs(delta) <= DELTA_TOL:
        delta = 0.0
    return DecayFit(
        c=float(math.exp(coef[0])),
        delta=delta,
        residual=float(np.sqrt(np.mean(res**2))),
        n_rows=len(usable),
        excluded=excluded,
    )
