import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssprollout.exact_solver import bellman_apply, value_iteration
from ssprollout.model import STOP, DisturbanceSsp, induce_kernel
from ssprollout.rollout import (ce_policy, eta_inexactness, expected_next_value, greedy_policy,
                                mismatch_delta)
from ssprollout.scenarios import (GridworldSpec, frozen_obstacle_value, gridworld_nav,
                                  noisy_value, random_disturbance_ssp, sharpness_chain)


def divergent():
    """Nominal outcome of action ``a`` is the terminal, but it usually lands in
    the expensive state 1; action ``b`` is a safe cost-2 exit."""
    return DisturbanceSsp.from_table(
        3, 2, [["a", "b"], ["go"], [STOP]], ["lucky", "unlucky"], [0.1, 0.9], 0,
        [[[2, 1], [2, 2]], [[2, 2]]], [[1.0, 2.0], [10.0]])


def test_sharpness_rollout_continues_everywhere():
    s = sharpness_chain(6, 0.1)
    pi, diag = greedy_policy(s.model, s.V)
    assert pi[:6].tolist() == [1] * 6
    assert pi[6] == 0
    # stop scores 0, continue scores eps/2 - eps
    assert diag.score[:6] == pytest.approx([-0.05] * 6)
    assert diag.runner_up_gap[:6] == pytest.approx([0.05] * 6)
    assert np.isinf(diag.runner_up_gap[6])


def test_greedy_score_equals_bellman_image():
    s = sharpness_chain(4, 0.3)
    pi, diag = greedy_policy(s.model, s.V)
    TV, g = bellman_apply(s.model, s.V)
    assert np.array_equal(diag.score, TV) and np.array_equal(pi, g)


def test_ce_differs_from_rollout_on_divergent_instance():
    d = divergent()
    vstar = value_iteration(induce_kernel(d)).value
    assert vstar.tolist() == pytest.approx([2.0, 10.0, 0.0])
    assert ce_policy(d, vstar)[0] == 0
    assert greedy_policy(induce_kernel(d), vstar)[0][0] == 1
    m = mismatch_delta(d, vstar)
    assert m.delta == pytest.approx(9.0)
    assert m.table.tolist() == pytest.approx([9.0, 0.0, 0.0, 0.0])


def test_expected_next_value():
    d = divergent()
    assert expected_next_value(d, [0.0, 10.0, 0.0]).tolist() == pytest.approx([9.0, 0.0, 0.0, 0.0])


def test_delta_small_example():
    # one state, one action, fair coin between t (V=0) and state 1 (V=4)
    d = DisturbanceSsp.from_table(3, 2, [["a"], ["a"], [STOP]], ["h", "t"], [0.5, 0.5], 0,
                                  [[[2, 1]], [[2, 2]]], [[1.0], [1.0]])
    assert mismatch_delta(d, [0.0, 4.0, 0.0]).delta == pytest.approx(2.0)


def test_delta_restricted_to_ce_reachable_states():
    # state 1 has a large mismatch but is unreachable from state 0
    d = DisturbanceSsp.from_table(3, 2, [["a"], ["a"], [STOP]], ["h", "t"], [0.5, 0.5], 0,
                                  [[[2, 2]], [[2, 0]]], [[1.0], [1.0]])
    V = [6.0, 0.0, 0.0]
    assert mismatch_delta(d, V).delta == pytest.approx(3.0)
    restricted = mismatch_delta(d, V, start=0)
    assert restricted.restricted and restricted.delta == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_zero_value_has_zero_mismatch(seed):
    d = random_disturbance_ssp(8, 3, 3, seed=seed)
    assert mismatch_delta(d, np.zeros(8)).delta == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 10), a=st.integers(1, 4))
def test_single_disturbance_ce_equals_rollout(seed, n, a):
    d = random_disturbance_ssp(n, a, 1, seed=seed)
    V = np.random.default_rng(seed).uniform(-3, 3, n)
    V[d.terminal] = 0.0
    assert np.array_equal(ce_policy(d, V), greedy_policy(induce_kernel(d), V)[0])
    assert mismatch_delta(d, V).delta == 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), w=st.integers(1, 4))
def test_ce_inexactness_at_most_twice_delta(seed, w):
    d = random_disturbance_ssp(9, 3, w, seed=seed)
    V = np.random.default_rng(seed).uniform(0, 5, 9)
    V[d.terminal] = 0.0
    eta = eta_inexactness(induce_kernel(d), V, ce_policy(d, V)).eta
    assert eta <= 2 * mismatch_delta(d, V).delta + 1e-12


def test_eta_zero_for_greedy_and_positive_otherwise():
    s = sharpness_chain(3, 0.2)
    pi, _ = greedy_policy(s.model, s.V)
    assert eta_inexactness(s.model, s.V, pi).eta == 0.0
    stop = np.zeros(5, dtype=int)
    inex = eta_inexactness(s.model, s.V, stop)
    assert inex.eta == pytest.approx(0.1)
    assert inex.per_state.tolist() == pytest.approx([0.1, 0.1, 0.1, 0.0, 0.0])


def test_gridworld_ce_with_frozen_obstacle_value():
    g = gridworld_nav(GridworldSpec(collision_penalty=5.0))
    V = frozen_obstacle_value(g.spec)
    pi = ce_policy(g.model, V)
    assert pi.shape == (g.model.n_states,)
    assert mismatch_delta(g.model, V, start=g.start).delta <= mismatch_delta(g.model, V).delta


def test_noisy_value_amplitude():
    v = np.arange(6.0)
    v[5] = 0.0
    nv = noisy_value(v, 0.1, 5, seed=3)
    assert nv[5] == 0.0
    assert np.max(np.abs(nv - v)) <= 0.1
