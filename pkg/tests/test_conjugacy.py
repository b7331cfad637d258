from fractions import Fraction

import numpy as np
import pytest

from toral_rigidity.algebra import IntMatrix
from toral_rigidity.conjugacy import (
    DisplacementField,
    SpectralSplit,
    exact_orbit,
    grid_permutation,
    increment_rate,
    invert,
    residual,
    solve_orbit,
    solve_spectral,
)
from toral_rigidity.dynamics import Profile, TorusMap, grid_points, torus_delta
from toral_rigidity.errors import DivergenceError, InversionError, ParseError, PrecisionError, UnsupportedError

CAT = IntMatrix(((2, 1), (1, 1)))
SAMPLE = np.random.default_rng(5).random((100, 2))


@pytest.fixture(scope="module")
def h256(conjugated):
    return solve_spectral(conjugated, CAT, 256, 1e-9)


def test_spectral_split_block_diagonalizes(quartic):
    for L in (CAT, quartic):
        s = SpectralSplit.of(L)
        la = L.to_array()
        recon = s.basis @ s.block_matrix @ s.inverse
        assert np.max(np.abs(recon - la)) < 1e-12 * np.max(np.abs(la))
        mods = [m for _, _, m in s.blocks]
        assert mods == sorted(mods)


def test_non_hyperbolic_unsupported():
    L = IntMatrix.companion((1, -2, 0, -2, 1))
    with pytest.raises(UnsupportedError):
        solve_spectral(TorusMap.linear(L), L, 8)


def test_linear_map_gives_zero_displacement():
    h = solve_spectral(TorusMap.linear(CAT), CAT, 64)
    assert h.norm_sup == 0.0
    assert residual(h, TorusMap.linear(CAT), CAT) == 0.0


def test_recovers_known_conjugacy(h256, conjugated, psi):
    hinv = psi.inverse_map()
    pts = grid_points(256, 2)
    assert np.max(np.abs(torus_delta(h256.h(pts), hinv.lift(pts)))) < 1e-4
    assert residual(h256, conjugated, CAT) < 1e-6
    assert h256.meta["report"].residual < 1e-6


def test_residual_gate_on_refined_grid(h256, conjugated):
    # Off-grid evaluation is limited by interpolation, not by the solver.
    coarse = residual(h256, conjugated, CAT)
    fine = residual(h256, conjugated, CAT, refine=2)
    assert fine < 1e-4
    assert residual(h256.with_order(3), conjugated, CAT, refine=2) < 1e-8
    assert coarse <= fine


def test_sheared_map_still_conjugate():
    f = TorusMap.linear(CAT).then(TorusMap.shear((1, 0), (0, 1), Profile.sine(0.02)))
    h = solve_spectral(f, CAT, 128, 1e-9)
    assert residual(h, f, CAT) < 1e-8


def test_uniqueness_probe(conjugated):
    rng = np.random.default_rng(11)
    finals = []
    for _ in range(5):
        init = DisplacementField(0.05 * rng.standard_normal((64, 64, 2)))
        finals.append(solve_spectral(conjugated, CAT, 64, 1e-11, initial=init).values)
    for v in finals[1:]:
        assert np.max(np.abs(v - finals[0])) < 1e-8


def test_divergence_detected():
    f = TorusMap.linear(CAT).then(TorusMap.shear((1, 0), (0, 1), Profile.sine(0.6)))
    with pytest.raises(DivergenceError):
        solve_spectral(f, CAT, 32, 1e-9, max_sweeps=60)


def test_grid_permutation_is_bijection():
    perm = grid_permutation(CAT, 32)
    assert sorted(perm) == list(range(32 * 32))


def test_orbit_solver_matches_spectral_and_truth(h256, conjugated, psi):
    sol = solve_orbit(conjugated, CAT, 30, SAMPLE)
    truth = psi.inverse_map().lift(SAMPLE)
    assert np.max(np.abs(torus_delta(sol.values, truth))) < 1e-10
    assert np.max(np.abs(torus_delta(sol.values, h256.with_order(3).h(SAMPLE)))) < 1e-6
    assert np.max(np.abs(torus_delta(sol.values, h256.h(SAMPLE)))) < 1e-5
    assert 0 < sol.contraction < 1


def test_orbit_solver_linear_map_is_identity():
    sol = solve_orbit(TorusMap.linear(CAT), CAT, 10, SAMPLE[:10])
    assert np.array_equal(sol.values, sol.points)
    assert np.all(sol.increments == 0)


def test_orbit_increments_decay(conjugated):
    sol = solve_orbit(conjugated, CAT, 25, SAMPLE[:20])
    env = sol.increments.max(axis=0)
    assert env[-1] < 1e-8 * env[0]


def test_precision_budget():
    f = TorusMap.linear(CAT)
    with pytest.raises(PrecisionError):
        solve_orbit(f, CAT, 41, SAMPLE[:2])
    with pytest.raises(PrecisionError):
        solve_orbit(f, CAT, 121, SAMPLE[:2], precision_bits=4000)
    with pytest.raises(PrecisionError):
        solve_orbit(f, CAT, 100, SAMPLE[:2], precision_bits=64)


def test_exact_orbit_rational_period():
    orb = exact_orbit(CAT, [[Fraction(1, 5), Fraction(2, 5)]], range(-2, 3))
    assert np.allclose(orb[2], [[0.2, 0.4]])
    assert np.allclose(orb[-2], [[0.2, 0.4]])
    assert np.allclose(orb[1], [[0.8, 0.6]])


def test_increment_rate_of_geometric_sequence():
    inc = np.array([[0.5**k for k in range(20)]])
    assert increment_rate(inc) == pytest.approx(0.5, rel=1e-12)


def test_invert_recovers_psi(h256, psi):
    w = invert(h256)
    pts = grid_points(256, 2)
    assert np.max(np.abs(torus_delta(w.h(pts), psi.lift(pts)))) < 1e-4


def test_invert_zero_and_translation():
    z = DisplacementField.zeros(16, 2)
    assert invert(z).norm_sup == 0.0
    c = DisplacementField(np.full((16, 16, 2), 0.01))
    assert np.allclose(invert(c).values, -0.01, atol=1e-15)


def test_invert_rejects_large_field():
    with pytest.raises(InversionError):
        invert(DisplacementField(np.full((8, 8, 2), 0.6)))


def test_field_io_roundtrip(tmp_path, h256):
    small = DisplacementField(h256.values[::16, ::16])
    small.save(tmp_path / "h.txt")
    small.save(tmp_path / "h.bin", binary=True)
    assert np.array_equal(DisplacementField.load(tmp_path / "h.txt").values, small.values)
    assert np.array_equal(DisplacementField.load(tmp_path / "h.bin").values, small.values)
    data = (tmp_path / "h.bin").read_bytes()
    assert data[:4] == b"TRDF"


def test_field_io_errors():
    with pytest.raises(ParseError):
        DisplacementField.from_text("2 4\n0 0\n")
    with pytest.raises(ParseError):
        DisplacementField.from_bytes(b"TRDF\x02\x00\x00\x00\x04\x00\x00\x00")


def test_interpolation_is_periodic():
    rng = np.random.default_rng(2)
    u = DisplacementField(rng.standard_normal((16, 16, 2)))
    x = rng.random((50, 2))
    for order in (1, 3):
        v = u.with_order(order)
        assert np.allclose(v(x), v(x + 1.0), atol=1e-12)
    pts = grid_points(16, 2)
    assert np.allclose(u(pts), u.flat())
