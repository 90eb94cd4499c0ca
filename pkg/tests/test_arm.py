import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from restart_bandits.arm import (Arm, CostSpec, InfoStateA, InfoStateB, arm_from_dict,
                                 arm_to_dict, belief_table, cost_table, default_cost,
                                 expected_cost, info_chain, load_arm, make_structured_matrix,
                                 sample_reset_pmf, save_arm, step_info, structured_arm,
                                 validate_assumptions)

families = st.sampled_from([1, 2, 3, 4])
sizes = st.integers(2, 6)
probs = st.floats(0.05, 0.95)


def test_family1_layout():
    P = make_structured_matrix(1, 0.5, 4)
    expected = [[0.5, 0.5, 0.0, 0.0],
                [0.0, 0.5, 0.5, 0.0],
                [0.0, 0.0, 0.5, 0.5],
                [0.0, 0.0, 0.0, 1.0]]
    np.testing.assert_array_equal(P, expected)


def test_family2_merges_second_to_last_row():
    P = make_structured_matrix(2, 0.4, 4)
    np.testing.assert_allclose(P[0], [0.4, 0.3, 0.3, 0.0])
    np.testing.assert_allclose(P[2], [0.0, 0.0, 0.4, 0.6])


def test_family3_split():
    P = make_structured_matrix(3, 0.7, 5)
    np.testing.assert_allclose(P[1], [0.0, 0.7, 0.2, 0.1, 0.0])


def test_family4_spreads_uniformly():
    P = make_structured_matrix(4, 0.2, 4)
    np.testing.assert_allclose(P[0], [0.2, 0.8 / 3, 0.8 / 3, 0.8 / 3])
    np.testing.assert_allclose(P[1], [0.0, 0.2, 0.4, 0.4])
    np.testing.assert_allclose(P[2], [0.0, 0.0, 0.2, 0.8])
    np.testing.assert_array_equal(P[3], [0, 0, 0, 1])


@pytest.mark.parametrize("bad", [dict(family=5, p=0.5, size=3), dict(family=1, p=1.5, size=3),
                                 dict(family=1, p=0.5, size=1)])
def test_structured_matrix_rejects(bad):
    with pytest.raises(ValueError):
        make_structured_matrix(**bad)


@given(families, probs, sizes)
def test_structured_matrices_satisfy_assumptions(family, p, size):
    P = make_structured_matrix(family, p, size)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-15)
    assert np.allclose(np.tril(P, -1), 0)
    arm = Arm(P, sample_reset_pmf(size, 0), default_cost(size))
    assert validate_assumptions(arm).ok


@given(sizes, st.integers(0, 2**32 - 1))
def test_reset_pmf_is_a_pmf(size, seed):
    q = sample_reset_pmf(size, seed)
    assert q.shape == (size,)
    assert (q > 0).all()
    assert abs(q.sum() - 1) < 1e-12
    np.testing.assert_array_equal(q, sample_reset_pmf(size, seed))


def test_default_cost():
    c = default_cost(4)
    np.testing.assert_array_equal(c.passive, [0, 1, 4, 9])
    np.testing.assert_array_equal(c.active, [8, 8, 8, 8])


def test_arm_validation():
    P = make_structured_matrix(1, 0.5, 3)
    with pytest.raises(ValueError):
        Arm(P * 0.9, np.ones(3) / 3, default_cost(3))
    with pytest.raises(ValueError):
        Arm(P, np.array([0.5, 0.5]), default_cost(3))
    with pytest.raises(ValueError):
        CostSpec(np.array([-1.0, 0, 0]), np.zeros(3))
    arm = Arm(P, np.ones(3) / 3, default_cost(3))
    with pytest.raises(ValueError):
        arm.P[0, 0] = 1.0  # read-only


def test_beliefs_and_costs_at_reset():
    arm = structured_arm(2, 0.6, 4, 7)
    bA = belief_table(arm, "A", 3)
    np.testing.assert_allclose(bA[0], arm.Q)
    np.testing.assert_allclose(bA[2], arm.Q @ arm.P @ arm.P)
    bB = belief_table(arm, "B", 3)
    np.testing.assert_allclose(bB[1, 0], np.eye(4)[1])
    np.testing.assert_allclose(bB[1, 3], np.linalg.matrix_power(arm.P, 3)[1])
    cA = cost_table(arm, "A", 3)
    assert cA[1, 0] == pytest.approx(arm.Q @ arm.P @ arm.cost.passive)
    assert expected_cost(arm, InfoStateA(1), 0) == pytest.approx(cA[1, 0])
    assert expected_cost(arm, InfoStateB(2, 0), 1) == 8.0


@given(families, probs, sizes, st.integers(0, 12))
def test_expected_active_cost_is_constant(family, p, size, k):
    arm = structured_arm(family, p, size, 3)
    assert expected_cost(arm, InfoStateA(k), 1) == pytest.approx(0.5 * size**2, abs=1e-12)


def test_step_info_examples():
    assert step_info(InfoStateA(2), 0, 5) == InfoStateA(3)
    assert step_info(InfoStateA(5), 0, 5) == InfoStateA(5)
    assert step_info(InfoStateA(4), 1, 5) == InfoStateA(0)
    assert step_info(InfoStateB(1, 2), 0, 5) == InfoStateB(1, 3)
    assert step_info(InfoStateB(1, 5), 0, 5) == InfoStateB(1, 5)
    assert step_info(InfoStateB(1, 2), 1, 5, revealed_state=3) == InfoStateB(3, 0)
    with pytest.raises(ValueError):
        step_info(InfoStateB(1, 2), 1, 5)
    with pytest.raises(ValueError):
        step_info(InfoStateA(1), 0, 5, revealed_state=0)
    with pytest.raises(ValueError):
        step_info(InfoStateA(1), 2, 5)


@pytest.mark.parametrize("model", ["A", "B"])
def test_info_chain_matches_step_info(model):
    arm = structured_arm(3, 0.3, 3, 1)
    ell = 4
    chain = info_chain(arm, model, ell)
    T0, T1 = chain.transition(0), chain.transition(1)
    np.testing.assert_allclose(T0.sum(axis=1), 1)
    np.testing.assert_allclose(T1.sum(axis=1), 1)
    if model == "A":
        for k in range(ell + 1):
            nxt = step_info(InfoStateA(k), 0, ell).k
            assert T0[k, nxt] == 1
            assert T1[k, 0] == 1
    else:
        for s in range(3):
            for k in range(ell + 1):
                i = s * (ell + 1) + k
                nxt = step_info(InfoStateB(s, k), 0, ell)
                assert T0[i, nxt.s * (ell + 1) + nxt.k] == 1
                np.testing.assert_allclose(T1[i, :: ell + 1], arm.Q)


def test_assumption_report_flags_broken_cost():
    P = make_structured_matrix(1, 0.5, 3)
    arm = Arm(P, np.ones(3) / 3, CostSpec(np.array([4.0, 1.0, 0.0]), np.array([5.0, 2, 1])))
    rep = validate_assumptions(arm)
    assert not rep.ok
    assert rep.failures()


def test_assumption_report_flags_non_monotone_matrix():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    rep = validate_assumptions(Arm(P, np.array([0.5, 0.5]), default_cost(2)))
    assert not rep.stochastic_monotone


@given(families, probs, sizes, st.integers(0, 2**32 - 1))
def test_arm_json_roundtrip_is_exact(family, p, size, seed):
    arm = structured_arm(family, p, size, seed)
    back = arm_from_dict(json.loads(json.dumps(arm_to_dict(arm))))
    np.testing.assert_array_equal(back.P, arm.P)
    np.testing.assert_array_equal(back.Q, arm.Q)
    np.testing.assert_array_equal(back.cost.table, arm.cost.table)


def test_save_load(tmp_path):
    arm = structured_arm(4, 0.35, 5, 11)
    save_arm(arm, tmp_path / "arm.json")
    back = load_arm(tmp_path / "arm.json")
    np.testing.assert_array_equal(back.Q, arm.Q)
