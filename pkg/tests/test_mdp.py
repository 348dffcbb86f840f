import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfgplay.errors import DegeneratePolicy
from mfgplay.mdp import (entropy, evaluate_policy_exact, expected_value, greedy, kl_divergence,
                         optimality_gap_check, performance_difference_residual,
                         soft_bellman_residual, soft_iteration_cap, soft_solve,
                         soft_value_iteration, value_iteration_unregularized, visitation)
from mfgplay.model import InstantiatedMDP
from oracles import (brute_force_optimum, grid_search_soft_optimum, mc_value, random_mdp,
                     random_policy, series_value, series_visitation)

seeds = st.integers(0, 2**31 - 1)


def test_entropy_and_kl_edge_cases():
    assert entropy([[1.0, 0.0]])[0] == 0.0
    assert entropy([[0.5, 0.5]])[0] == pytest.approx(math.log(2))
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert np.isinf(kl_divergence([0.5, 0.5], [1.0, 0.0]))
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))


@given(seeds, st.sampled_from([0.0, 0.1, 1.0, 10.0]))
def test_exact_evaluation_matches_series(seed, lam):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 7)), int(rng.integers(1, 5))
    mdp = random_mdp(rng, n, m, lam)
    pi = random_policy(rng, n, m)
    v, q = evaluate_policy_exact(mdp, pi)
    scale = max(1.0, np.abs(v).max())
    assert np.max(np.abs(v - series_value(mdp, pi))) < 1e-11 * scale
    assert q == pytest.approx(mdp.R + mdp.gamma * mdp.P @ v, abs=1e-12 * scale)


def test_exact_evaluation_matches_monte_carlo():
    rng = np.random.default_rng(7)
    gamma = 0.5
    mdp = random_mdp(rng, 4, 3, lam=0.3, gamma=gamma)
    pi = random_policy(rng, 4, 3, floor=0.05)
    v, _ = evaluate_policy_exact(mdp, pi)
    horizon = math.ceil(math.log(1e-6) / math.log(gamma))
    mc, se = mc_value(mdp, pi, 10**6, horizon, np.random.default_rng(8), with_se=True)
    # truncation bias is below 1e-6 * Q_max
    assert np.all(np.abs(mc - v) < 3 * se + 1e-6 * mdp.q_max)


def test_evaluation_closed_forms():
    one = InstantiatedMDP(np.ones((1, 3)), np.ones((1, 3, 1)), 0.8, [1.0])
    assert evaluate_policy_exact(one, np.full((1, 3), 1 / 3))[0][0] == pytest.approx(5.0)
    ent = InstantiatedMDP(np.zeros((1, 2)), np.ones((1, 2, 1)), 0.8, [1.0], lam=1.0)
    assert evaluate_policy_exact(ent, np.full((1, 2), 0.5))[0][0] == pytest.approx(math.log(2) / 0.2)


def test_one_step_softmax():
    mdp = InstantiatedMDP(np.array([[1.0, 0.0]]), np.ones((1, 2, 1)), 1e-300, [1.0], lam=1.0)
    _, pi = soft_value_iteration(mdp, 1e-12)
    assert pi[0, 0] == pytest.approx(math.e / (1 + math.e), abs=1e-12)


def test_unregularised_closed_forms():
    mdp = InstantiatedMDP(np.array([[1.0, 0.0]]), np.ones((1, 2, 1)), 0.5, [1.0])
    q, pi = value_iteration_unregularized(mdp, 1e-12)
    assert q.max(1)[0] == pytest.approx(2.0) and np.array_equal(pi, [[1.0, 0.0]])
    const = InstantiatedMDP(np.full((3, 2), 0.4), random_mdp(np.random.default_rng(0), 3, 2).P,
                            0.75, np.full(3, 1 / 3))
    q, pi = value_iteration_unregularized(const, 1e-13)
    assert q == pytest.approx(np.full((3, 2), 1.6), abs=1e-10)
    assert np.array_equal(pi, np.tile([1.0, 0.0], (3, 1)))


def test_regularised_evaluation_needs_positive_policy():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, 2, 2, lam=0.5)
    with pytest.raises(DegeneratePolicy):
        evaluate_policy_exact(mdp, np.array([[1.0, 0.0], [0.5, 0.5]]))
    # unregularised evaluation accepts deterministic policies
    evaluate_policy_exact(mdp.with_lam(0.0), np.array([[1.0, 0.0], [0.5, 0.5]]))


@given(seeds)
def test_visitation_matches_series(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, int(rng.integers(1, 7)), 2)
    pi = random_policy(rng, mdp.n, 2)
    rho = visitation(mdp, pi)
    assert rho == pytest.approx(series_visitation(mdp, pi), abs=1e-12)
    assert rho.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(rho >= (1 - mdp.gamma) * mdp.nu0 - 1e-15)


@given(seeds, st.sampled_from([0.1, 1.0, 10.0]))
def test_soft_optimality_properties(seed, lam):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, int(rng.integers(1, 7)), int(rng.integers(2, 5)), lam)
    v, q, pi, iters = soft_solve(mdp, 1e-12)
    assert iters <= soft_iteration_cap(mdp, 1e-12) + 8
    assert soft_bellman_residual(mdp, v) < 1e-12
    assert np.all(q <= mdp.q_max + 1e-9) and np.all(q >= -1e-12)
    floor = 1.0 / (math.exp(mdp.q_max / lam) * mdp.m)
    assert np.all(pi >= floor)
    # policy evaluation of the Boltzmann policy reproduces Q*
    _, q_pi = evaluate_policy_exact(mdp, pi)
    assert np.max(np.abs(q_pi - q)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_soft_optimum_matches_grid_search(seed):
    rng = np.random.default_rng(100 + seed)
    mdp = random_mdp(rng, 1 + seed % 3, 2, lam=float(rng.choice([0.1, 0.5, 1.0])))
    _, pi = soft_value_iteration(mdp, 1e-12)
    j_soft = expected_value(mdp, pi)
    j_grid, _ = grid_search_soft_optimum(mdp, points=21, rounds=9)
    assert j_grid <= j_soft + 1e-10
    assert j_soft - j_grid < 1e-4


@given(seeds)
def test_unregularised_vi_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
    _, pi = value_iteration_unregularized(mdp, 1e-12)
    best, _ = brute_force_optimum(mdp)
    assert expected_value(mdp, pi) == pytest.approx(best, abs=1e-9)


def test_greedy_breaks_ties_low():
    q = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0 - 1e-15]])
    assert np.array_equal(greedy(q), [[1, 0, 0], [0, 1, 0]])


@given(seeds, st.sampled_from([0.0, 0.1, 1.0, 10.0]))
def test_performance_difference_identity(seed, lam):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 5)), lam)
    pi, pi2 = random_policy(rng, mdp.n, mdp.m), random_policy(rng, mdp.n, mdp.m)
    assert performance_difference_residual(mdp, pi, pi2) < 1e-9


def test_performance_difference_hand_example():
    # one state, two actions: J(pi) = <pi, R> + lam H(pi) over (1 - gamma)
    mdp = InstantiatedMDP(np.array([[1.0, 0.0]]), np.ones((1, 2, 1)), 0.5, [1.0], lam=1.0)
    pi, pi2 = np.array([[0.5, 0.5]]), np.array([[0.9, 0.1]])
    j = lambda p: float((p @ mdp.R[0])[0] + entropy(p)[0]) / 0.5
    assert expected_value(mdp, pi2) - expected_value(mdp, pi) == pytest.approx(j(pi2) - j(pi))
    assert performance_difference_residual(mdp, pi, pi2) < 1e-14


@given(seeds, st.sampled_from([0.01, 0.1, 1.0]))
def test_optimality_gap_bound(seed, lam):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, int(rng.integers(1, 6)), int(rng.integers(2, 4)), lam)
    _, pi = soft_value_iteration(mdp, 1e-12)
    gap, bound = optimality_gap_check(mdp, pi)
    assert bound == pytest.approx(lam * math.log(mdp.m) / (1 - mdp.gamma))
    # entropy only adds value, so the gap sits in [-bound, 0]
    assert -bound - 1e-9 <= gap <= 1e-9


def test_optimality_gap_zero_reward():
    mdp = random_mdp(np.random.default_rng(1), 3, 3, lam=0.7)
    mdp = InstantiatedMDP(np.zeros_like(mdp.R), mdp.P, mdp.gamma, mdp.nu0, lam=0.7)
    v, _, pi, _ = soft_solve(mdp, 1e-13)
    assert pi == pytest.approx(np.full((3, 3), 1 / 3), abs=1e-12)
    assert v == pytest.approx(np.full(3, 0.7 * math.log(3) / (1 - mdp.gamma)), abs=1e-10)
    gap, bound = optimality_gap_check(mdp, pi)
    assert gap == pytest.approx(-bound, abs=1e-10)


def test_soft_solve_rejects_bad_args():
    mdp = random_mdp(np.random.default_rng(0), 2, 2, lam=0.0)
    with pytest.raises(ValueError):
        soft_solve(mdp)
    with pytest.raises(ValueError):
        soft_solve(mdp.with_lam(1.0), tol=0.0)


def test_visitation_limits():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, 4, 2, gamma=1e-12)
    pi = random_policy(rng, 4, 2)
    assert visitation(mdp, pi) == pytest.approx(mdp.nu0, abs=1e-10)
    P = np.repeat(np.eye(4)[:, None, :], 2, axis=1)
    still = InstantiatedMDP(mdp.R, P, 0.9, mdp.nu0)
    assert visitation(still, pi) == pytest.approx(mdp.nu0, abs=1e-12)


def test_expected_value_point_mass():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng, 3, 2, lam=0.3)
    mdp = InstantiatedMDP(mdp.R, mdp.P, mdp.gamma, [0.0, 1.0, 0.0], lam=0.3)
    pi = random_policy(rng, 3, 2)
    assert expected_value(mdp, pi) == pytest.approx(evaluate_policy_exact(mdp, pi)[0][1], abs=1e-14)


def test_performance_difference_same_policy_is_zero():
    rng = np.random.default_rng(6)
    mdp = random_mdp(rng, 5, 3, lam=0.5)
    pi = random_policy(rng, 5, 3)
    assert performance_difference_residual(mdp, pi, pi) == 0.0


def test_optimality_gap_vanishes_with_lambda():
    mdp = random_mdp(np.random.default_rng(9), 4, 3, lam=1e-6)
    _, pi = soft_value_iteration(mdp, 1e-13)
    gap, _ = optimality_gap_check(mdp, pi)
    assert abs(gap) < 1e-4


def test_optimality_gap_four_actions():
    from mfgplay.generators import generate_instance
    from mfgplay.model import instantiate
    from mfgplay.play import compute_ne
    model = generate_instance("random_contractive", {"n": 6, "m": 4, "gamma": 0.9}, seed=1)
    G = model.gram()
    ne = compute_ne(model, G, 0.5)
    gap, bound = optimality_gap_check(instantiate(model, ne.L, ne.mu, 0.5), ne.pi)
    assert bound == pytest.approx(0.5 * math.log(4) / 0.1) and bound == pytest.approx(6.931, abs=1e-3)
    assert gap <= bound
