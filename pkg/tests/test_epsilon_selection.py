import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import enumerate_vertices

from l1monge import fixtures as fx
from l1monge.costs import CostSpec, cost_matrix
from l1monge.epsilon_selection import (DEFAULT_EPSILONS, EpsilonLadder, convergence_report,
                                       parse_epsilons, run_ladder, two_stage_oracle)
from l1monge.exceptions import MeasureMismatch, NonMonotoneLadder
from l1monge.measure import DiscreteMeasure
from l1monge.transport_lp import TransportPlan

SHIFT = np.eye(4) / 4


def test_parse_forms():
    assert parse_epsilons("1e-1:1e-4:geometric") == list(DEFAULT_EPSILONS)
    assert parse_epsilons("0.1, 0.01") == [0.1, 0.01]
    assert parse_epsilons([0.5]) == [0.5]
    for bad in ("0.1,0.2", "1e-1:1e-4:linear", "", "0,-1", "1e-4:1e-1:geometric"):
        with pytest.raises(ValueError):
            parse_epsilons(bad)


def test_book_shift_every_rung_is_the_shift():
    ladder = run_ladder(*fx.book_shift(), [0.1, 0.01, 0.001])
    for plan in ladder.plans:
        assert np.allclose(plan.matrix(), SHIFT, atol=1e-15)
    assert np.allclose(ladder.w1_values, 1.0, atol=1e-12)
    assert np.allclose(ladder.alpha_values, math.sqrt(2), atol=1e-12)
    assert ladder.stabilized()


def test_equal_measures():
    ladder = run_ladder(*fx.identity(), [0.1, 0.01])
    assert np.all(ladder.w1_values == 0) and np.all(ladder.alpha_values == 1)


def test_large_epsilon_follows_alpha_on_two_by_two():
    # sources 0, 1 and targets 1, 2: both vertices cost 1 in distance
    src = DiscreteMeasure.from_atoms([0.0, 1.0])
    tgt = DiscreteMeasure.from_atoms([1.0, 2.0])
    D = cost_matrix(CostSpec(), src.points, tgt.points)
    A = cost_matrix(CostSpec("alpha"), src.points, tgt.points)
    vertices = [np.array(v, float) for v in enumerate_vertices(src.masses, tgt.masses)]
    assert len(vertices) == 2
    best_alpha = min(vertices, key=lambda P: np.sum(P * A))
    ladder = run_ladder(src, tgt, [1e3])
    assert np.sum(vertices[0] * D) == pytest.approx(np.sum(vertices[1] * D))
    assert np.allclose(ladder.plans[0].matrix(), best_alpha)
    assert np.allclose(best_alpha, np.eye(2) / 2)


def test_two_stage_oracle_on_book_shift():
    oracle, cert = two_stage_oracle(*fx.book_shift())
    assert np.allclose(oracle.matrix(), SHIFT, atol=1e-9)
    assert oracle.alpha_cost() == pytest.approx(math.sqrt(2), abs=1e-9)
    assert abs(cert.w1_limit - 1) <= 1e-8 and abs(cert.alpha_limit - math.sqrt(2)) <= 1e-8
    assert max(abs(g) for g in cert.gaps) <= 1e-8
    assert cert.passed and cert.stabilized and not cert.low_confidence


def test_unique_optimum_stage_two_equals_stage_one():
    src = DiscreteMeasure.from_atoms([0.0, 10.0])
    tgt = DiscreteMeasure.from_atoms([1.0, 12.0])
    oracle, cert = two_stage_oracle(src, tgt)
    assert np.allclose(oracle.matrix(), np.eye(2) / 2, atol=1e-9)
    assert cert.passed


def test_single_rung_is_low_confidence():
    src, tgt = fx.book_shift()
    ladder = run_ladder(src, tgt, [0.01])
    _, cert = two_stage_oracle(src, tgt, ladder=ladder)
    assert cert.low_confidence and not cert.stabilized


def test_mismatched_measures():
    src, tgt = fx.book_shift()
    ladder = run_ladder(src, tgt, [0.1, 0.01])
    other, _ = two_stage_oracle(*fx.identity(), ladder=run_ladder(*fx.identity(), [0.1]))
    with pytest.raises(MeasureMismatch):
        convergence_report(ladder, other)
    with pytest.raises(MeasureMismatch):
        EpsilonLadder([0.1, 0.01], [ladder.plans[0], other])


def test_non_monotone_ladder_detected():
    src, tgt = fx.book_shift()
    good = run_ladder(src, tgt, [0.1])
    jump = np.zeros((4, 4))
    jump[1, 0] = jump[2, 1] = jump[3, 2] = jump[0, 3] = 0.25
    # alpha cost dropping from the jump plan to the shift plan as eps falls
    bad_plan = TransportPlan.from_matrix(jump, src, tgt, CostSpec("c_epsilon", 0.1))
    ladder = EpsilonLadder([0.1, 0.01], [bad_plan, good.plans[0]])
    oracle, _ = two_stage_oracle(src, tgt, ladder=good)
    with pytest.raises(NonMonotoneLadder):
        convergence_report(ladder, oracle)


def test_negative_face_tol_rejected():
    with pytest.raises(ValueError):
        two_stage_oracle(*fx.book_shift(), face_tol=-1)


def test_threaded_ladder_matches_sequential():
    src, tgt, _ = fx.empirical_pair(2, 24, 3)
    a = run_ladder(src, tgt, DEFAULT_EPSILONS)
    b = run_ladder(src, tgt, DEFAULT_EPSILONS, workers=3)
    assert np.allclose(a.w1_values, b.w1_values, rtol=1e-12)
    assert np.allclose(a.alpha_values, b.alpha_values, rtol=1e-12)


@given(st.integers(0, 10_000))
def test_scalarization_monotone(seed):
    rng = np.random.default_rng(seed)
    src = DiscreteMeasure.from_atoms(rng.integers(-3, 4, size=(5, 2)), rng.random(5) + 0.1, normalize=True)
    tgt = DiscreteMeasure.from_atoms(rng.integers(-3, 4, size=(6, 2)), rng.random(6) + 0.1, normalize=True)
    ladder = run_ladder(src.coalesce(), tgt.coalesce(), DEFAULT_EPSILONS)
    dw, da = ladder.monotonicity_violations()
    assert dw <= 1e-12 and da <= 1e-12
