import numpy as np
import pytest
from sympy import divisors, mobius

from toral_rigidity.algebra import IntMatrix
from toral_rigidity.cocycles import SubBundleField, flag_estimate, linear_bundle
from toral_rigidity.conjugacy import DisplacementField, solve_spectral
from toral_rigidity.dynamics import TorusMap, grid_points, to_float
from toral_rigidity.errors import InsufficientScaleError
from toral_rigidity.rigidity import (
    density_ratio,
    dyadic_scales,
    flag_transport_check,
    holder_exponent,
    jacobian_average,
    leaf_pair,
    leafwise_derivative,
    linear_log_det,
    livsic_obstruction,
    minimal_orbits,
    transfer_check,
)

from conftest import CAT, LOG_GOLDEN_SQ, QUARTIC

EU = linear_bundle(CAT, "unstable")


@pytest.fixture(scope="module")
def Eu_conj(conjugated):
    return flag_estimate(conjugated, CAT, 1, 8, 40, "unstable")


@pytest.fixture(scope="module")
def h3(conjugated):
    return solve_spectral(conjugated, CAT, 256, 1e-10).with_order(3)


def _fixed_counts(n):
    return abs(round(np.linalg.det(np.linalg.matrix_power(CAT.to_array(), n) - np.eye(2))))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_minimal_orbit_counts_against_mobius(n):
    points = sum(int(mobius(n // k)) * _fixed_counts(k) for k in divisors(n))
    assert len(minimal_orbits(CAT, n)) == points // n


def test_minimal_orbits_are_canonical():
    reps = minimal_orbits(CAT, 2)
    assert reps == sorted(reps)
    assert [tuple(map(str, r)) for r in reps] == [("1/5", "2/5"), ("2/5", "4/5")]


def test_linear_log_det():
    assert linear_log_det(CAT, EU) == pytest.approx(LOG_GOLDEN_SQ, rel=1e-14)
    assert linear_log_det(CAT, np.eye(2)) == pytest.approx(0.0, abs=1e-14)


def test_livsic_vanishes_for_linear_map():
    rep = livsic_obstruction(TorusMap.linear(CAT), SubBundleField.constant(EU), CAT, EU, 4)
    assert rep.max_obstruction < 1e-12
    assert rep.counts == {1: 1, 2: 2, 3: 5, 4: 10}
    assert "period" in rep.table()


def test_livsic_vanishes_for_conjugated_and_is_gauge_free(conjugated, Eu_conj):
    a = livsic_obstruction(conjugated, Eu_conj, CAT, EU, 3)
    b = livsic_obstruction(conjugated, Eu_conj, CAT, EU, 3, gauge=-np.eye(1))
    assert a.max_obstruction < 1e-8
    assert not a.failures
    assert all(o.closing_error < 1e-12 for o in a.orbits)
    assert [o.value for o in a.orbits] == pytest.approx([o.value for o in b.orbits], abs=1e-13)


def test_livsic_detects_sheared_map(sheared):
    E = flag_estimate(sheared, CAT, 1, 8, 40, "unstable")
    assert livsic_obstruction(sheared, E, CAT, EU, 2).max_obstruction > 1e-3


def test_livsic_quartic_gauge_rotation(conjugated4):
    lin = linear_bundle(QUARTIC, "class", 1)
    E = flag_estimate(conjugated4, QUARTIC, 1, 2, 40, "class")
    c, s = np.cos(0.7), np.sin(0.7)
    a = livsic_obstruction(conjugated4, E, QUARTIC, lin, 1)
    b = livsic_obstruction(conjugated4, E, QUARTIC, lin, 1, gauge=np.array([[c, -s], [s, c]]))
    assert a.max_obstruction < 1e-8
    assert a.max_obstruction == pytest.approx(b.max_obstruction, abs=1e-12)


def test_livsic_period_cap():
    with pytest.raises(ValueError):
        livsic_obstruction(TorusMap.linear(CAT), SubBundleField.constant(EU), CAT, EU, 7)


def test_jacobian_average(conjugated, Eu_conj):
    lin = jacobian_average(TorusMap.linear(CAT), SubBundleField.constant(EU), CAT, EU, 500)
    assert abs(lin.mean) < 1e-14
    # Cohomologous to a constant, so the mean vanishes up to sampling error.
    avg = jacobian_average(conjugated, Eu_conj, CAT, EU, 4000)
    assert abs(avg.mean) < 4 * avg.stderr + 1e-12


def test_density_ratio_linear_is_one():
    f = TorusMap.linear(CAT)
    E = SubBundleField.constant(EU)
    y = leaf_pair(f, E, [0.3, 0.6], 0.05)
    assert float(density_ratio(f, E, [0.3, 0.6], y)) == pytest.approx(1.0, abs=1e-14)


def test_density_ratio_matches_conjugacy_oracle(conjugated, psi, Eu_conj):
    # With f = psi^-1 L psi the ratio is J(x)/J(y), J = |Dpsi e_f|.
    x = np.array([0.3, 0.6])
    # The pair is only on the leaf to the depth it was built with.
    y = leaf_pair(conjugated, Eu_conj, x, 0.05, depth=80, prec=300)
    yf = to_float(y)

    def J(p):
        return np.linalg.norm(psi.differential(p[None])[0] @ Eu_conj.at(p[None])[0][:, 0])

    r = density_ratio(conjugated, Eu_conj, x, y)
    assert float(r) == pytest.approx(J(x) / J(yf), rel=1e-10)
    full = density_ratio(conjugated, Eu_conj, x, y, truncate=False, max_depth=60, prec=300)
    half = density_ratio(conjugated, Eu_conj, x, y, truncate=False, max_depth=30, prec=300)
    assert float(full) == pytest.approx(float(half), rel=1e-10)


def test_dyadic_scales_span_two_decades():
    s = dyadic_scales(1024)
    assert s[0] == 2.0**-8
    assert s[-1] / s[0] >= 100


def test_holder_of_identity_is_one():
    est = holder_exponent(DisplacementField.zeros(256, 2), n_pairs=200, n_boot=200)
    assert est.alpha == pytest.approx(1.0, abs=1e-12)
    assert est.lipschitz


def test_holder_of_smooth_conjugacy(h3):
    for direction in ("global", SubBundleField.constant(EU, label="unstable")):
        est = holder_exponent(h3, direction, n_pairs=300, n_boot=300)
        assert est.lipschitz
        assert abs(est.alpha - 1) < 0.01


def test_holder_needs_scales():
    with pytest.raises(InsufficientScaleError):
        holder_exponent(DisplacementField.zeros(64, 2), scales=[0.1, 0.2, 0.4])


def test_leafwise_derivative_of_linear_displacement():
    pts = grid_points(32, 2)
    u = DisplacementField((0.01 * np.sin(2 * np.pi * pts[:, 0])).reshape(32, 32, 1) * np.array([0.0, 1.0]))
    x = np.array([[0.25, 0.5]])
    d = leafwise_derivative(u.with_order(3), x, np.eye(2), 1 / 32)
    assert d[0] == pytest.approx(np.array([[1, 0], [0.02 * np.pi * np.cos(np.pi / 2), 1]]), abs=1e-4)


def test_transfer_check(conjugated, h3):
    zero = DisplacementField.zeros(64, 2)
    assert transfer_check(zero, TorusMap.linear(CAT), CAT, EU) < 1e-12
    assert transfer_check(h3, conjugated, CAT, EU) < 1e-3


def test_flag_transport(conjugated, h3, Eu_conj):
    zero = DisplacementField.zeros(512, 2)
    assert flag_transport_check(zero, CAT, 1, SubBundleField.constant(EU)) < 1e-12
    assert flag_transport_check(h3, CAT, 1, Eu_conj, delta=2e-2) < 1e-2
    with pytest.raises(InsufficientScaleError):
        flag_transport_check(zero, CAT, 1, SubBundleField.constant(EU), delta=1e-3)
