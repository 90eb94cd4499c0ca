import json
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from restart_bandits.arm import Arm, cost_table, default_cost, structured_arm
from restart_bandits.dp import joint_optimal_policy
from restart_bandits.sim import (Fleet, MyopicPolicy, OptimalPolicy, SimConfig, WhittlePolicy,
                                 alpha_opt, eps_myp, exact_value, make_fleet, myopic_sequential,
                                 p_grid, simulate, simulate_many)
from restart_bandits.whittle import whittle_table


def _wip(fleet, ell, beta=0.99):
    return WhittlePolicy(fleet, [whittle_table(a, fleet.model, beta, ell) for a in fleet.arms])


def test_p_grid():
    np.testing.assert_allclose(p_grid(3), [0.05, 0.5, 0.95])
    np.testing.assert_allclose(p_grid(20)[[0, -1]], [0.05, 0.95])


def test_fleet_validation():
    arms = [structured_arm(1, 0.5, 3, i) for i in range(2)]
    with pytest.raises(ValueError):
        Fleet(arms, 2, "A")
    with pytest.raises(ValueError):
        Fleet(arms, 1, "C")


def test_fleets_share_machines_across_models_and_budgets():
    a = make_fleet(2, 4, 1, 5, "A", seed=3)
    b = make_fleet(2, 4, 2, 5, "B", seed=3)
    for x, y in zip(a.arms, b.arms):
        np.testing.assert_array_equal(x.Q, y.Q)
        np.testing.assert_array_equal(x.P, y.P)
    assert not np.array_equal(a.arms[0].Q, make_fleet(2, 4, 1, 5, "A", seed=4).arms[0].Q)


def test_wip_tie_break_lowest_ids():
    arm = structured_arm(1, 0.5, 3, 0)
    fleet = Fleet([arm] * 4, 2, "A")
    pol = _wip(fleet, 3)
    k = np.array([[1, 1, 1, 1]])
    assert pol(None, k).tolist() == [[1, 1, 0, 0]]


def test_wip_picks_largest_index():
    arms = [structured_arm(1, 0.5, 3, 0)] * 2
    fleet = Fleet(arms, 1, "A")
    pol = _wip(fleet, 3)
    w = pol.w[0]
    assert w[3] > w[0]
    assert pol(None, np.array([[0, 3]])).tolist() == [[0, 1]]
    assert pol(None, np.array([[3, 0]])).tolist() == [[1, 0]]


def test_policies_clamp_to_their_truncation():
    fleet = make_fleet(1, 3, 1, 4, "B", seed=0)
    pol = _wip(fleet, 3)
    s = np.array([[0, 1, 2]])
    np.testing.assert_array_equal(pol(s, np.array([[9, 4, 40]])), pol(s, np.array([[3, 3, 3]])))


@given(st.lists(st.floats(0, 50), min_size=2, max_size=7), st.data())
def test_myopic_matches_sequential_rule(c0, data):
    n = len(c0)
    c1 = data.draw(st.lists(st.floats(0, 50), min_size=n, max_size=n))
    m = data.draw(st.integers(1, n - 1))
    delta = np.array(c1) - np.array(c0)
    chosen = myopic_sequential(c0, c1, m)
    # sequential rounds pick the m smallest c1 - c0, lowest id first on ties
    order = sorted(range(n), key=lambda i: (delta[i], i))[:m]
    assert chosen == sorted(order)


def test_myopic_policy_against_enumeration():
    # hand-set beliefs: three model-A arms at different elapsed times
    fleet = make_fleet(3, 3, 2, 4, "A", seed=2)
    pol = MyopicPolicy(fleet, 5)
    for k in itertools.product(range(6), repeat=3):
        c = [cost_table(a, "A", 5)[ki] for a, ki in zip(fleet.arms, k)]
        want = myopic_sequential([x[0] for x in c], [x[1] for x in c], 2)
        got = np.flatnonzero(pol(None, np.array([k]))[0]).tolist()
        assert got == want


def test_myopic_default_costs_pick_largest_passive_cost():
    fleet = make_fleet(1, 3, 1, 4, "B", seed=0)
    pol = MyopicPolicy(fleet, 3)
    s = np.array([[0, 3, 1]])
    k = np.array([[0, 0, 0]])
    assert pol(s, k).tolist() == [[0, 1, 0]]


@given(st.integers(0, 2**16), st.sampled_from([1, 2, 3, 4]))
def test_wip_model_B_monotone_in_own_k(seed, family):
    fleet = make_fleet(family, 3, 1, 3, "B", seed)
    pol = _wip(fleet, 4, beta=0.9)
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 3, size=(1, 3))
    k = rng.integers(0, 5, size=(1, 3))
    was = False
    for kk in range(5):
        k[0, 0] = kk
        now = bool(pol(s, k)[0, 0])
        assert now or not was
        was = now


def test_deterministic_all_passive_fleet():
    # P = I and Q a unit mass: every arm sits in state 2 (cost 4) forever
    arm = Arm(np.eye(3), np.array([0.0, 0.0, 1.0]), default_cost(3))
    fleet = Fleet([arm] * 3, 1, "A")
    cfg = SimConfig(horizon=200, paths=4, beta=0.9)
    lazy = simulate(fleet, lambda s, k: np.zeros(k.shape, dtype=np.int8), cfg, "idle")
    assert lazy.J_hat == pytest.approx(12 * (1 - 0.9**200), rel=1e-12)
    assert lazy.std_err == 0


def test_budget_violation():
    fleet = make_fleet(1, 3, 1, 3, "A", seed=0)
    with pytest.raises(ValueError, match="activated"):
        simulate(fleet, lambda s, k: np.ones(k.shape, dtype=np.int8),
                 SimConfig(horizon=5, paths=2))


def test_reproducible_and_chunk_independent():
    fleet = make_fleet(2, 3, 1, 4, "B", seed=1)
    pol = _wip(fleet, 3)
    a = simulate(fleet, pol, SimConfig(horizon=100, paths=30, seed=5, chunk=7), "wip")
    b = simulate(fleet, pol, SimConfig(horizon=100, paths=30, seed=5, chunk=30), "wip")
    assert a.J_hat == b.J_hat and a.std_err == b.std_err
    assert a.to_json() == b.to_json()
    c = simulate(fleet, pol, SimConfig(horizon=100, paths=30, seed=6), "wip")
    assert c.J_hat != a.J_hat


@pytest.mark.parametrize("model", ["A", "B"])
def test_debug_shadow_recomputation(model):
    fleet = make_fleet(4, 3, 1, 4, model, seed=0)
    simulate(fleet, MyopicPolicy(fleet, 3), SimConfig(horizon=60, paths=20), debug=True)


@pytest.mark.parametrize("model", ["A", "B"])
def test_belief_accounting_matches_exact_truncated_chain(model):
    fleet = make_fleet(3, 2, 1, 4, model, seed=2)
    pol = _wip(fleet, 3)
    r = simulate(fleet, pol, SimConfig(horizon=1000, paths=1000, seed=3, ell=3,
                                       accounting="belief"), "wip")
    exact = exact_value(fleet, pol, 0.99, 3)
    assert abs(r.J_hat - exact) <= 4 * r.std_err + r.tail_bound


@pytest.mark.parametrize("model, ell", [("A", 40), ("B", 25)])
def test_true_accounting_matches_exact_when_cap_unreachable(model, ell):
    fleet = make_fleet(1, 2, 1, 4, model, seed=4)
    pol = MyopicPolicy(fleet, ell)
    r = simulate(fleet, pol, SimConfig(horizon=1000, paths=1000, seed=8, ell=ell), "myp")
    exact = exact_value(fleet, pol, 0.99, ell)
    assert abs(r.J_hat - exact) <= 4 * r.std_err + r.tail_bound


def test_std_err_shrinks_like_inverse_sqrt():
    fleet = make_fleet(2, 3, 1, 4, "A", seed=0)
    pol = MyopicPolicy(fleet, 10)
    small = simulate(fleet, pol, SimConfig(horizon=300, paths=400, seed=1))
    big = simulate(fleet, pol, SimConfig(horizon=300, paths=1600, seed=1))
    assert 0.35 < big.std_err / small.std_err < 0.7


@pytest.mark.parametrize("model", ["A", "B"])
def test_opt_beats_heuristics_on_the_truncated_chain(model):
    fleet = make_fleet(4, 3, 1, 4, model, seed=7)
    opt = OptimalPolicy(fleet, joint_optimal_policy(fleet.arms, model, 1, 0.99, 3, exact=True))
    J = {name: exact_value(fleet, pol, 0.99, 3)
         for name, pol in [("opt", opt), ("wip", _wip(fleet, 3)), ("myp", MyopicPolicy(fleet, 3))]}
    assert J["opt"] <= J["wip"] + 1e-9
    assert J["opt"] <= J["myp"] + 1e-9


def test_optimal_policy_single_arm_lookup():
    fleet = make_fleet(1, 2, 1, 3, "A", seed=0)
    jp = joint_optimal_policy(fleet.arms, "A", 1, 0.9, 3)
    pol = OptimalPolicy(fleet, jp)
    k = np.array([[2, 1]])
    np.testing.assert_array_equal(pol(None, k)[0], jp.action((2, 1)))
    with pytest.raises(ValueError):
        OptimalPolicy(make_fleet(1, 2, 1, 3, "B", seed=0), jp)


def test_simulate_many_uses_common_noise():
    fleet = make_fleet(1, 3, 1, 4, "A", seed=0)
    pol = _wip(fleet, 3)
    cfg = SimConfig(horizon=50, paths=20, seed=2)
    both = simulate_many(fleet, {"x": pol, "y": pol}, cfg)
    assert both["x"].J_hat == both["y"].J_hat
    d = json.loads(both["x"].to_json())
    assert set(d) == {"policy", "J_hat", "std_err", "paths", "horizon", "seed", "tail_bound",
                      "config_fingerprint"}


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(beta=1.0)
    with pytest.raises(ValueError):
        SimConfig(paths=0)
    with pytest.raises(ValueError):
        SimConfig(accounting="expected")


def test_ratios():
    assert alpha_opt(3.0, 3.0) == 100.0
    assert alpha_opt(1.0, 2.0) == 50.0
    assert eps_myp(2.0, 2.0) == 0.0
    assert eps_myp(2.0, 1.0) == 50.0
    with pytest.raises(ZeroDivisionError):
        alpha_opt(1.0, 0.0)
    with pytest.raises(ZeroDivisionError):
        eps_myp(0.0, 1.0)
