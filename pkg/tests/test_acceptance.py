"""Acceptance criteria, each checked at its stated tolerance and time budget."""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from toral_rigidity.algebra import IntMatrix, check_hypotheses, periodic_count, periodic_points
from toral_rigidity.cocycles import (
    SubBundleField,
    distortion_trend,
    flag_estimate,
    linear_bundle,
    lyapunov_qr,
    uniform_starts,
    volume_lyapunov,
)
from toral_rigidity.conjugacy import residual, solve_orbit, solve_spectral
from toral_rigidity.dynamics import TorusMap, grid_points, torus_delta
from toral_rigidity.rigidity import holder_exponent, jacobian_average, livsic_obstruction, transfer_check
from toral_rigidity.survey import decay_fit, enumerate_sl, run_survey, sample_sl

from conftest import ACCEPTANCE, CAT, LOG_GOLDEN_SQ, QUARTIC

EU = linear_bundle(CAT, "unstable")
ES = linear_bundle(CAT, "stable")


class Outcome:
    def __init__(self):
        self.checks = []
        self.notes = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok)))
        if detail:
            self.notes.append(f"{name} {detail}")

    @property
    def ok(self):
        return all(ok for _, ok in self.checks)

    def failed(self):
        return [name for name, ok in self.checks if not ok]


@contextmanager
def criterion(number, title, budget, note_on_fail=""):
    out = Outcome()
    t0 = time.perf_counter()
    try:
        yield out
    finally:
        elapsed = time.perf_counter() - t0
        out.check("runtime", elapsed < budget, f"{elapsed:.1f}s/{budget:g}s")
        status = "PASS" if out.ok else "FAIL"
        line = f"criterion {number}: {status}  {title}  [{'; '.join(out.notes)}]"
        if not out.ok:
            line += f"  failed: {', '.join(out.failed())}"
            if note_on_fail:
                line += f"  ({note_on_fail})"
        ACCEPTANCE.append(line)
    assert out.ok, line


@pytest.fixture(scope="module")
def h_spectral(conjugated):
    return solve_spectral(conjugated, CAT, 256, 1e-9)


def test_criterion_1_hypothesis_checker():
    cases = [
        (CAT, "thm1-eligible", None, None),
        (IntMatrix(((2, 1, 0, 0), (1, 1, 0, 0), (0, 0, 2, 1), (0, 0, 1, 1))), "neither", "reducible", None),
        (IntMatrix.companion((1, -2, 0, -2, 1)), "thm2-eligible", None, 2),
    ]
    with criterion(1, "hypothesis checker verdicts", 3.0) as c:
        for m, verdict, reason, circle in cases:
            t0 = time.perf_counter()
            r = check_hypotheses(m)
            dt = time.perf_counter() - t0
            c.check(f"{verdict}", r.verdict == verdict and r.reason == reason, f"{dt * 1e3:.0f}ms")
            c.check(f"{verdict}-time", dt < 1.0)
            if circle is not None:
                c.check("unit_circle_count", r.unit_circle_count == circle)


@pytest.mark.xfail(
    strict=True,
    reason="quarter-turn eigenvalue ratios make chi_{L^4} reducible without a lambda,-lambda or i*lambda,-i*lambda pair",
)
def test_criterion_2_fourth_power_sweep():
    mats = list(sample_sl(4, 10, 1000, seed=0))
    note = "exceptions have eigenvalue ratio i between non-conjugate roots; the fourth-power collision test has none"
    with criterion(2, "fourth-power irreducibility sweep", 120.0, note) as c:
        stated = sharp = 0
        for m in mats:
            r = check_hypotheses(m)
            stated += not r.remark1_consistent
            sharp += r.l4_irreducible != (r.irreducible and not r.fourth_power_collision)
        c.check("samples", len(mats) == 1000)
        c.check("stated-equivalence", stated == 0, f"exceptions={stated}")
        c.check("sharp-equivalence", sharp == 0, f"sharp_exceptions={sharp}")


def test_criterion_3_constant_cocycle():
    with criterion(3, "cat map exponents at n=1e4", 1.0) as c:
        ex = lyapunov_qr(TorusMap.linear(CAT), [0.1234, 0.5678], 10_000)
        err = float(np.max(np.abs(ex - [0.9624236501, -0.9624236501])))
        c.check("exponents", err < 1e-9, f"err={err:.1e}")


def test_criterion_4_conjugated_exponents(conjugated):
    with criterion(4, "conjugated map exponents match L", 120.0) as c:
        stats = volume_lyapunov(conjugated, 100, 100_000, seed=0)
        z = np.abs(np.array(stats.exponents) - [LOG_GOLDEN_SQ, -LOG_GOLDEN_SQ]) / np.array(stats.stderr)
        c.check("within-2-stderr", np.all(z <= 2), f"z={np.round(z, 2).tolist()}")


def test_criterion_5_conjugacy_solvers(conjugated, psi, h_spectral):
    with criterion(5, "spectral and orbit conjugacy solvers", 300.0) as c:
        h = solve_spectral(conjugated, CAT, 256, 1e-9)
        res = residual(h, conjugated, CAT)
        c.check("residual", res < 1e-6, f"residual={res:.1e}")
        pts = grid_points(256, 2)
        sup = float(np.max(np.abs(torus_delta(h.h(pts), psi.inverse_map().lift(pts)))))
        c.check("sup-to-known", sup < 1e-4, f"sup={sup:.1e}")
        x = uniform_starts(100, 2, 0)
        orb = solve_orbit(conjugated, CAT, 30, x)
        gap = float(np.max(np.abs(torus_delta(orb.values, h.h(x)))))
        c.check("orbit-vs-spectral", gap < 1e-5, f"gap={gap:.1e}")


def test_criterion_6_conclusion_shadow(conjugated):
    with criterion(6, "regularity, Livsic and transfer for the conjugated map", 300.0) as c:
        h = solve_spectral(conjugated, CAT, 1024, 1e-9).with_order(3)
        directions = {
            "unstable": SubBundleField.constant(EU, label="unstable"),
            "stable": SubBundleField.constant(ES, label="stable"),
            "global": "global",
        }
        for name, direction in directions.items():
            est = holder_exponent(h, direction, n_pairs=1000, seed=0)
            c.check(f"holder-{name}", est.lipschitz, f"{name}=[{est.band[0]:.4f},{est.band[1]:.4f}]")
        E = flag_estimate(conjugated, CAT, 1, 16, 60, "unstable")
        rep = livsic_obstruction(conjugated, E, CAT, EU, 4)
        c.check("livsic", rep.max_obstruction < 1e-8 and not rep.failures, f"livsic={rep.max_obstruction:.1e}")
        defect = transfer_check(h, conjugated, CAT, EU, n_pts=100)
        c.check("transfer", defect < 1e-3, f"transfer={defect:.1e}")


def test_criterion_7_negative_control(sheared):
    with criterion(7, "sheared map breaks the exponent match", 300.0) as c:
        stats = volume_lyapunov(sheared, 100, 100_000, seed=0)
        top, top_se = stats.positive_sum(1)
        shift = top - LOG_GOLDEN_SQ
        c.check("exponent-shift", abs(shift) > 2 * top_se, f"shift={shift:.4f}+-{top_se:.1e}")
        E = flag_estimate(sheared, CAT, 1, 16, 60, "unstable")
        rep = livsic_obstruction(sheared, E, CAT, EU, 4)
        c.check("livsic-positive", rep.max_obstruction > 0, f"livsic={rep.max_obstruction:.3g}")
        avg = jacobian_average(sheared, E, CAT, EU, 20_000, seed=0)
        gap = abs(avg.mean - shift)
        tol = 2 * np.hypot(avg.stderr, top_se)
        c.check("volume-average", gap <= tol, f"avg={avg.mean:.4f} gap/tol={gap / tol:.2f}")


def test_criterion_8_periodic_points():
    with criterion(8, "periodic point counts of the cat map", 1.0) as c:
        for n, expect in zip((1, 2, 3), (1, 5, 16)):
            c.check(f"det-{n}", periodic_count(CAT, n) == expect)
            c.check(f"enum-{n}", len(periodic_points(CAT, n)) == expect)


def test_criterion_9_quasiconformality(conjugated4):
    with criterion(9, "bounded distortion on the 2-dim unstable bundle", 120.0) as c:
        pts = uniform_starts(200, 4, 0)
        E = flag_estimate(conjugated4, QUARTIC, 1, 4, 60, "unstable")
        slope = distortion_trend(conjugated4, E, pts, 50).slope
        c.check("invariant-slope", abs(slope) <= 1e-3, f"slope={slope:.1e}")
        eu, es = linear_bundle(QUARTIC, "unstable"), linear_bundle(QUARTIC, "stable")
        plane = SubBundleField.constant(np.column_stack([eu[:, 0], es[:, 0]]), 4, "control")
        ctrl = distortion_trend(conjugated4, plane, pts, 50).slope
        c.check("control-slope", ctrl > 1e-3, f"control={ctrl:.3g}")


def test_criterion_10_genericity():
    with criterion(10, "failure fraction decays with the norm bound", 180.0) as c:
        rows = run_survey(2, [3, 6, 12, 24])
        fit = decay_fit(rows)
        c.check("delta", fit.delta > 0, f"delta={fit.delta:.3f}")
        r = range(-3, 4)
        recount = sum(
            abs(a * d - b * cc) == 1 for a in r for b in r for cc in r for d in r
        )
        c.check("recount", rows[0].n_total == recount == sum(1 for _ in enumerate_sl(2, 3)), f"n={recount}")
