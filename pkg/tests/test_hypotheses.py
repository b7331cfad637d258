import json
import time

import pytest
import sympy as sp

from toral_rigidity.algebra import IntMatrix, check_hypotheses, power_charpoly
from toral_rigidity.algebra.hypotheses import (
    NEITHER,
    THM1,
    THM2,
    has_fourth_power_collision,
    has_imaginary_pair,
    has_negation_pair,
)
from toral_rigidity.survey import sample_sl

CAT = IntMatrix(((2, 1), (1, 1)))


def test_cat_map_is_thm1():
    r = check_hypotheses(CAT)
    assert r.verdict == THM1 and r.reason is None and r.remark1_consistent


def test_block_diagonal_cat_is_reducible():
    r = check_hypotheses(IntMatrix.blockdiag(CAT, CAT))
    assert r.verdict == NEITHER and r.reason == "reducible"
    assert r.thm1_failures[0] == "reducible"


def test_partially_hyperbolic_companion_is_thm2():
    r = check_hypotheses(IntMatrix.companion((1, -2, 0, -2, 1)))
    assert r.verdict == THM2 and r.unit_circle_count == 2
    assert r.totally_irreducible and r.real_simple_off_circle


def test_negation_pair_blocks_fourth_power_irreducibility():
    r = check_hypotheses(IntMatrix.companion((1, 0, -5, 0, 1)))
    assert r.irreducible and r.negation_pair and not r.l4_irreducible
    assert r.verdict == NEITHER and r.reason == "L4-reducible"
    assert r.remark1_consistent


def test_quartic_preset_thm1_with_paired_moduli():
    r = check_hypotheses(IntMatrix(((1, -1, 1, 0), (1, 1, 0, 1), (0, -1, 1, 0), (1, 0, 0, 1))))
    assert r.verdict == THM1
    assert r.modulus_multiplicities == (2, 2)


def test_three_same_modulus_detected():
    # t^6 - 3t^3 + 1: each root of s^2 - 3s + 1 has three cube roots of equal modulus.
    r = check_hypotheses(IntMatrix.companion((1, 0, 0, -3, 0, 0, 1)))
    assert not r.no_three_same_modulus
    assert "three-same-modulus" in r.thm1_failures
    assert r.modulus_multiplicities == (3, 3)


def test_pair_detectors():
    assert has_negation_pair((1, 0, -5, 0, 1))
    assert not has_negation_pair((1, -3, 1))
    assert has_imaginary_pair((4, 0, 1))  # +-2i
    assert not has_imaginary_pair((1, -3, 1))
    assert not has_imaginary_pair((0, 1))  # the root 0 is not a pair


def test_record_is_json_stable():
    r = check_hypotheses(CAT)
    rec = json.loads(r.to_json())
    assert rec["verdict"] == THM1 and rec["matrix"] == [[2, 1], [1, 1]]
    assert "verdict" in r.table()


@pytest.mark.parametrize(
    "rows",
    [
        ((1, 2, 0, -2), (0, 1, 0, -1), (1, 0, 1, 0), (1, 0, 1, 1)),
        ((-2, 1, -2, -1), (1, 1, 0, 0), (2, 0, 1, 1), (4, 1, 2, 2)),
    ],
)
def test_quarter_turn_pairs_escape_the_stated_pair_conditions(rows):
    """Eigenvalues a(1 +- i): ratio i, so the fourth powers collide."""
    m = IntMatrix(rows)
    r = check_hypotheses(m)
    t = sp.symbols("t")
    chi4 = sp.Poly(list(reversed(power_charpoly(m, 4).coeffs)), t)
    assert not chi4.is_irreducible  # independent oracle
    assert r.irreducible and not r.forbidden_pairs_present and not r.l4_irreducible
    assert r.fourth_power_collision
    assert not r.remark1_consistent


def test_fourth_power_collision_characterizes_l4_irreducibility():
    for m in sample_sl(4, 10, 300, seed=7):
        r = check_hypotheses(m)
        assert r.l4_irreducible == (r.irreducible and not r.fourth_power_collision)


def test_collision_detector():
    assert has_fourth_power_collision((1, 0, -5, 0, 1), power_charpoly(IntMatrix.companion((1, 0, -5, 0, 1)), 4).coeffs)
    assert not has_fourth_power_collision((1, -3, 1), power_charpoly(CAT, 4).coeffs)


@pytest.mark.parametrize("m", [CAT, IntMatrix.blockdiag(CAT, CAT), IntMatrix.companion((1, -2, 0, -2, 1))])
def test_runtime_under_a_second(m):
    t0 = time.perf_counter()
    check_hypotheses(m)
    assert time.perf_counter() - t0 < 1.0
