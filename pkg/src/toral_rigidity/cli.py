"""Command-line entry point: ``toral-rigidity <subcommand> [options]``.

Every run resolves a configuration (defaults, then ``--config`` JSON, then
flags), writes it to ``<out>/config.json`` before computing, and appends
newline-delimited JSON records to ``<out>/records.ndjson``.  Each record
carries ``config_hash``; appending to a file written under another hash is
refused.  Wall-clock data goes to ``<out>/metadata.json`` only, so records
from identical configs are byte-identical.

Exit codes: 0 success, 1 negative verdict, 2 usage or parse error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import IntMatrix, check_hypotheses, spectrum
from .algebra.hypotheses import NEITHER
from .cocycles import (
    FlagLayout,
    SubBundleField,
    distortion_trend,
    flag_estimate,
    linear_bundle,
    spectrum_match,
    uniform_starts,
    volume_lyapunov,
)
from .conjugacy import residual, solve_orbit, solve_spectral
from .dynamics import Profile, TorusMap, c1_distance, load_map, make_conjugated, torus_delta
from .errors import DerivativeEstimationError, ParseError, ToralError
from .rigidity import (
    dyadic_scales,
    flag_transport_check,
    holder_exponent,
    jacobian_average,
    livsic_obstruction,
    transfer_check,
)
from .survey import decay_fit, run_survey

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

CAT = ((2, 1), (1, 1))
QUARTIC = ((1, -1, 1, 0), (1, 1, 0, 1), (0, -1, 1, 0), (1, 0, 0, 1))
PH_QUARTIC_CHARPOLY = (1, -2, 0, -2, 1)

# name -> (matrix, construction, default epsilon)
PRESETS = {
    "conjugated-cat": (CAT, "conjugated", 0.02),
    "sheared-cat": (CAT, "sheared", 0.05),
    "identity": (CAT, "linear", 0.0),
    "conjugated-quartic": (QUARTIC, "conjugated", 0.02),
    "ph-quartic": (None, "conjugated", 0.02),
}

# Fields that do not change any computed value stay out of the hash.
_UNHASHED = ("out", "threads")


@dataclass
class ExperimentConfig:
    """Resolved experiment parameters; every field has a default.

    ``grid_n``, ``bundle_grid`` and ``regularity_grid`` of 0 mean
    dimension-dependent defaults.
    """

    preset: str | None = "conjugated-cat"
    matrix: str | None = None
    map: str | None = None
    epsilon: float | None = None
    grid_n: int = 0
    tau: float = 1e-9
    residual_gate: float = 1e-6
    n_max: int = 30
    orbit_samples: int = 100
    lyap_n: int = 100000
    n_samples: int = 100
    seed: int = 0
    beta: float = 0.5
    bundle_grid: int = 0
    n_power: int = 60
    livsic_max_period: int = 4
    regularity_grid: int = 0
    scales: list | None = None
    n_pairs: int = 1000
    transfer_points: int = 100
    flag_delta: float = 1e-2
    distortion_points: int = 200
    distortion_n: int = 50
    survey_d: int = 2
    survey_T: list = field(default_factory=lambda: [3, 6, 12, 24])
    survey_mode: str = "enumerate"
    survey_n: int = 10000
    survey_norm: str = "max"
    precision_bits: int = 128
    threads: int = 1
    out: str = "results"

    def resolved_grid(self, d: int) -> int:
        if self.grid_n:
            return self.grid_n
        return 256 if d == 2 else 2 ** (16 // d)

    def resolved_bundle_grid(self, d: int) -> int:
        if self.bundle_grid:
            return self.bundle_grid
        return 16 if d == 2 else 4

    def resolved_regularity_grid(self, d: int) -> int:
        if self.regularity_grid:
            return self.regularity_grid
        return 1024 if d == 2 else self.resolved_grid(d)

    def hash(self) -> str:
        data = {k: v for k, v in asdict(self).items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ParseError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**data)
    if cfg.preset is not None and cfg.preset not in PRESETS:
        raise ParseError(f"unknown preset {cfg.preset!r}; choose from {sorted(PRESETS)}")
    return cfg


@dataclass
class Experiment:
    L: IntMatrix
    f: TorusMap
    known_h: TorusMap | None
    label: str


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    """The map f and its linear part from a map file, a matrix file or a preset."""
    if cfg.map:
        f = load_map(cfg.map)
        return Experiment(f.linear_part(), f, None, f"map:{cfg.map}")
    if cfg.matrix and cfg.preset is None:
        L = IntMatrix.load(cfg.matrix)
        return Experiment(L, TorusMap.linear(L), None, f"matrix:{cfg.matrix}")
    if cfg.preset is None:
        raise ParseError("give a preset, a matrix file or a map file")
    rows, kind, eps = PRESETS[cfg.preset]
    if cfg.matrix:
        L = IntMatrix.load(cfg.matrix)
    elif rows is None:
        L = IntMatrix.companion(PH_QUARTIC_CHARPOLY)
    else:
        L = IntMatrix(rows)
    if cfg.epsilon is not None:
        eps = cfg.epsilon
    d = L.dim
    w = (1,) + (0,) * (d - 1)
    v = (0, 1) + (0,) * (d - 2)
    shear = TorusMap.shear(w, v, Profile.sine(eps))
    label = f"{cfg.preset} eps={eps:g}"
    if kind == "linear":
        return Experiment(L, TorusMap.linear(L), TorusMap.identity(d), label)
    if kind == "sheared":
        return Experiment(L, TorusMap.linear(L).then(shear), None, label)
    return Experiment(L, make_conjugated(L, shear), shear.inverse_map(), label)


class Recorder:
    """Appends records to ``records.ndjson`` and keeps them for the caller."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.hash = cfg.hash()
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.path = self.out / "records.ndjson"
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip() and json.loads(line).get("config_hash") != self.hash:
                    raise ParseError(f"{self.path} holds records from another config; refusing to mix")
        (self.out / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
        self.meta = {
            "command": command,
            "config_hash": self.hash,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "stage_seconds": {},
        }
        self.records: list[dict] = []

    def emit(self, kind: str, payload: dict) -> dict:
        rec = {"record": kind, "config_hash": self.hash, **_jsonable(payload)}
        self.records.append(rec)
        with self.path.open("a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec

    def timed(self, stage: str, seconds: float):
        self.meta["stage_seconds"][stage] = round(seconds, 3)

    def close(self, status: int):
        self.meta["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.meta["exit_code"] = status
        (self.out / "metadata.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage} failed: {exc}")
        self.stage = stage
        self.exc = exc


def _stage(rec: Recorder, name: str, fn):
    t0 = time.perf_counter()
    try:
        return fn()
    except ToralError as exc:
        rec.emit("error", {"stage": name, "error": type(exc).__name__, "message": str(exc)})
        raise StageError(name, exc) from exc
    finally:
        rec.timed(name, time.perf_counter() - t0)


def linear_exponents(L: IntMatrix) -> list[float]:
    spec = spectrum(L)
    return sorted((float(math.log(abs(complex(z)))) for z in spec.eigenvalues), reverse=True)


# ------------------------------------------------------------------- stages


def stage_check(rec: Recorder, L: IntMatrix, bits: int):
    report = check_hypotheses(L, bits)
    rec.emit("check", report.to_record())
    return report


def stage_perturb(rec: Recorder, exp: Experiment):
    dist = c1_distance(exp.f, exp.L)
    payload = {
        "label": exp.label,
        "dim": exp.f.dim,
        "linear_part": [list(r) for r in exp.L.entries],
        "nodes": [type(n).__name__ for n in exp.f.nodes],
        "volume_preserving": exp.f.volume_preserving,
        "c1_distance": dist.value,
        "c0": dist.c0,
        "c1": dist.c1,
    }
    rec.emit("perturb", payload)
    return payload


def stage_lyapunov(rec: Recorder, exp: Experiment, cfg: ExperimentConfig):
    stats = volume_lyapunov(exp.f, cfg.n_samples, cfg.lyap_n, cfg.seed)
    match = spectrum_match(stats, exp.L)
    rec.emit("lyapunov", {**stats.to_record(), "linear_exponents": linear_exponents(exp.L), **match.to_record()})
    return stats, match.matched


def stage_conjugate(rec: Recorder, exp: Experiment, cfg: ExperimentConfig):
    grid = cfg.resolved_grid(exp.L.dim)
    h = solve_spectral(exp.f, exp.L, grid, cfg.tau)
    rep = h.meta["report"]
    res = residual(h, exp.f, exp.L)
    payload = {
        "grid_n": grid,
        "sweeps": rep.sweeps,
        "residual": res,
        "residual_gate": cfg.residual_gate,
        "gate_passed": res < cfg.residual_gate,
    }
    if exp.known_h is not None:
        pts = uniform_starts(1000, exp.L.dim, cfg.seed)
        payload["sup_to_known"] = float(np.max(np.abs(torus_delta(h.with_order(3).h(pts), exp.known_h.lift(pts)))))
    sample = uniform_starts(cfg.orbit_samples, exp.L.dim, cfg.seed + 1)
    sol = solve_orbit(exp.f, exp.L, cfg.n_max, sample)
    payload["orbit_vs_spectral"] = float(np.max(np.abs(torus_delta(sol.values, h.with_order(3).h(sample)))))
    payload["orbit_contraction"] = sol.contraction
    rec.emit("conjugate", payload)
    if not payload["gate_passed"]:
        raise StageError("conjugate", ToralError(f"residual {res:.3g} above gate {cfg.residual_gate:g}"))
    return h


def _unstable_bundle(exp: Experiment, cfg: ExperimentConfig, kind: str = "unstable"):
    return flag_estimate(exp.f, exp.L, 1, cfg.resolved_bundle_grid(exp.L.dim), cfg.n_power, kind)


def stage_livsic(rec: Recorder, exp: Experiment, cfg: ExperimentConfig, E: SubBundleField):
    E_L = linear_bundle(exp.L, "unstable")
    report = livsic_obstruction(exp.f, E, exp.L, E_L, cfg.livsic_max_period)
    payload = report.to_record()
    ja = jacobian_average(exp.f, E, exp.L, E_L, seed=cfg.seed)
    payload["volume_average"] = {"mean": ja.mean, "stderr": ja.stderr, "n_points": ja.n_points}
    rec.emit("livsic", payload)
    return report


# Dyadic ladders spanning two decades above the interpolation floor need this.
MIN_REGULARITY_GRID = 256


def stage_regularity(rec: Recorder, exp: Experiment, cfg: ExperimentConfig, E: SubBundleField):
    d = exp.L.dim
    grid = cfg.resolved_regularity_grid(d)
    if grid < MIN_REGULARITY_GRID:
        rec.emit("skipped", {"stages": ["regularity"], "reason": f"regularity grid {grid} below {MIN_REGULARITY_GRID}"})
        return []
    h = solve_spectral(exp.f, exp.L, grid, cfg.tau).with_order(3)
    scales = cfg.scales or dyadic_scales(grid)
    estimates = []
    for label, direction in (
        ("unstable", linear_bundle(exp.L, "unstable")[:, 0]),
        ("stable", linear_bundle(exp.L, "stable")[:, 0]),
        ("global", None),
    ):
        est = holder_exponent(h, direction, scales=scales, n_pairs=cfg.n_pairs, seed=cfg.seed, label=label)
        estimates.append(est)
        rec.emit("holder", est.to_record())
    E_L = linear_bundle(exp.L, "unstable")
    try:
        defect = transfer_check(h, exp.f, exp.L, E_L, E, cfg.transfer_points, seed=cfg.seed)
        rec.emit("transfer", {"grid_n": grid, "max_defect": defect})
    except DerivativeEstimationError as exc:
        # A conjugacy that is only Hoelder has no leafwise derivative to transfer.
        rec.emit("transfer", {"grid_n": grid, "max_defect": None, "error": str(exc)})
    slow = _unstable_bundle(exp, cfg, "slow")
    delta = max(cfg.flag_delta, 4 * h.grid_step)
    flag = flag_transport_check(h, exp.L, 1, slow, cfg.transfer_points, delta, seed=cfg.seed)
    rec.emit("flag_transport", {"grid_n": grid, "delta": delta, "max_defect": flag})
    return estimates


def stage_distortion(rec: Recorder, exp: Experiment, cfg: ExperimentConfig):
    """Distortion growth on each 2-dim unstable modulus class (skipped if none)."""
    layout = FlagLayout.of(exp.L)
    out = []
    pts = uniform_starts(cfg.distortion_points, exp.L.dim, cfg.seed)
    for k, dim in enumerate(layout.unstable_dims, start=1):
        if dim != 2:
            continue
        E = flag_estimate(exp.f, exp.L, k, cfg.resolved_bundle_grid(exp.L.dim), cfg.n_power, "class")
        trend = distortion_trend(exp.f, E, pts, cfg.distortion_n)
        out.append(trend)
        rec.emit("distortion", {"class": k, "slope": trend.slope, "max_distortion": trend.max_distortion})
    return out


def summary_line(matched: bool, band) -> str:
    b = "n/a" if band is None else f"[{band[0]:.4f},{band[1]:.4f}]"
    return f"spectra-matched: {'yes' if matched else 'no'}; regularity-band: {b}"


# ----------------------------------------------------------------- commands


def cmd_check(cfg: ExperimentConfig, rec: Recorder, matrix_path: str | None) -> int:
    if matrix_path:
        L = IntMatrix.load(matrix_path)
    else:
        L = build_experiment(cfg).L
    report = _stage(rec, "check", lambda: stage_check(rec, L, cfg.precision_bits))
    print(report.table())
    return EXIT_NEGATIVE if report.verdict == NEITHER else EXIT_OK


def cmd_perturb(cfg: ExperimentConfig, rec: Recorder) -> int:
    exp = build_experiment(cfg)
    payload = _stage(rec, "perturb", lambda: stage_perturb(rec, exp))
    print(f"{payload['label']}: C1 distance {payload['c1_distance']:.6g} (C0 {payload['c0']:.3g}, C1 {payload['c1']:.3g})")
    return EXIT_OK


def cmd_conjugate(cfg: ExperimentConfig, rec: Recorder) -> int:
    exp = build_experiment(cfg)
    h = _stage(rec, "conjugate", lambda: stage_conjugate(rec, exp, cfg))
    h.save(Path(cfg.out) / "h.bin", binary=True)
    r = rec.records[-1]
    print(f"residual {r['residual']:.3e} after {r['sweeps']} sweeps on grid {r['grid_n']}")
    return EXIT_OK


def cmd_lyapunov(cfg: ExperimentConfig, rec: Recorder) -> int:
    exp = build_experiment(cfg)
    stats, matched = _stage(rec, "lyapunov", lambda: stage_lyapunov(rec, exp, cfg))
    ref = linear_exponents(exp.L)
    for e, s, r in zip(stats.exponents, stats.stderr, ref):
        print(f"{e:+.10f} +- {s:.2e}   linear {r:+.10f}")
    print(f"spectra-matched: {'yes' if matched else 'no'}")
    return EXIT_OK


def cmd_rigidity(cfg: ExperimentConfig, rec: Recorder) -> int:
    exp = build_experiment(cfg)
    report = _stage(rec, "check", lambda: stage_check(rec, exp.L, cfg.precision_bits))
    _stage(rec, "perturb", lambda: stage_perturb(rec, exp))
    _, matched = _stage(rec, "lyapunov", lambda: stage_lyapunov(rec, exp, cfg))
    _stage(rec, "distortion", lambda: stage_distortion(rec, exp, cfg))
    band = None
    obstruction = None
    if report.hyperbolic:
        _stage(rec, "conjugate", lambda: stage_conjugate(rec, exp, cfg))
        E = _stage(rec, "bundle", lambda: _unstable_bundle(exp, cfg))
        obstruction = _stage(rec, "livsic", lambda: stage_livsic(rec, exp, cfg, E)).max_obstruction
        ests = _stage(rec, "regularity", lambda: stage_regularity(rec, exp, cfg, E))
        if ests:
            band = (min(e.band[0] for e in ests), max(e.band[1] for e in ests))
    else:
        rec.emit("skipped", {"stages": ["conjugate", "livsic", "regularity"], "reason": "linear part not hyperbolic"})
    line = summary_line(matched, band)
    rec.emit(
        "summary",
        {
            "spectra_matched": matched,
            "regularity_band": None if band is None else list(band),
            "livsic_max_obstruction": obstruction,
            "verdict": report.verdict,
            "line": line,
        },
    )
    print(line)
    return EXIT_OK if matched else EXIT_NEGATIVE


def cmd_survey(cfg: ExperimentConfig, rec: Recorder) -> int:
    rows = _stage(
        rec,
        "survey",
        lambda: run_survey(cfg.survey_d, cfg.survey_T, cfg.survey_mode, cfg.survey_n, cfg.seed, cfg.survey_norm, cfg.threads),
    )
    for r in rows:
        rec.emit("survey_row", r.to_record())
        print(f"T={r.T:<4d} n={r.n_total:<7d} fail={r.fail_fraction:.4f} +- {r.stderr:.4f}  {r.n_fail}")
    fit = _stage(rec, "fit", lambda: decay_fit(rows))
    rec.emit("decay_fit", fit.to_record())
    print(f"fit: c={fit.c:.4f} delta={fit.delta:.4f} residual={fit.residual:.4f}{'' if fit.decaying else ' (non-decaying)'}")
    return EXIT_OK


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--grid", type=int, dest="grid_n")
    common.add_argument("--out")
    common.add_argument("--threads", type=int)
    common.add_argument("--precision-bits", type=int, dest="precision_bits")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--epsilon", type=float)
    common.add_argument("--matrix", help="integer matrix file")
    common.add_argument("--map", help="node-list map file")

    p = argparse.ArgumentParser(prog="toral-rigidity", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    chk = sub.add_parser("check", parents=[common], help="hypothesis verdict for a matrix")
    chk.add_argument("matrix_file", nargs="?")
    sub.add_parser("perturb", parents=[common], help="build the perturbed map and report its C1 distance")
    sub.add_parser("conjugate", parents=[common], help="solve for the conjugacy")
    sub.add_parser("lyapunov", parents=[common], help="volume Lyapunov exponents against the linear ones")
    sub.add_parser("rigidity", parents=[common], help="full pipeline with summary line")
    srv = sub.add_parser("survey", parents=[common], help="failure fractions over a norm ladder")
    srv.add_argument("--d", type=int, dest="survey_d")
    srv.add_argument("--T", type=int, nargs="+", dest="survey_T")
    srv.add_argument("--mode", choices=("enumerate", "sample"), dest="survey_mode")
    srv.add_argument("--n", type=int, dest="survey_n")
    srv.add_argument("--norm", choices=("max", "operator"), dest="survey_norm")
    return p


_OVERRIDES = (
    "seed", "grid_n", "out", "threads", "precision_bits", "preset", "epsilon", "matrix", "map",
    "survey_d", "survey_T", "survey_mode", "survey_n", "survey_norm",
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    if args.matrix or args.map:
        # An explicit matrix or map replaces the default preset unless one is named.
        if args.preset is None:
            overrides["preset"] = None
    rec = None
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "check" and args.matrix_file:
            IntMatrix.load(args.matrix_file)
        rec = Recorder(cfg, args.command)
        handler = {
            "check": lambda: cmd_check(cfg, rec, args.matrix_file),
            "perturb": lambda: cmd_perturb(cfg, rec),
            "conjugate": lambda: cmd_conjugate(cfg, rec),
            "lyapunov": lambda: cmd_lyapunov(cfg, rec),
            "rigidity": lambda: cmd_rigidity(cfg, rec),
            "survey": lambda: cmd_survey(cfg, rec),
        }[args.command]
        status = handler()
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_USAGE
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_USAGE if isinstance(exc.exc, ParseError) else EXIT_NUMERICAL
    except ToralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_NUMERICAL
    if rec is not None:
        rec.close(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
