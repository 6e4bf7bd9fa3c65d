"""One-step lookahead policies built from an approximate value function."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exact_solver import closed_loop_graph, q_values, reachable_from, segment_argmin
from .model import DisturbanceSsp, KernelSsp, check_policy, check_value, induce_kernel, require_valid


class GreedyDiagnostics(NamedTuple):
    action: np.ndarray
    score: np.ndarray       # Q_V(x, pi_R(x)), equal to (TV)(x); 0 at the terminal
    runner_up_gap: np.ndarray  # second-best minus best score; inf with a single action


class Mismatch(NamedTuple):
    delta: float
    table: np.ndarray  # |E[V(F(x,u,w))] - V(F(x,u,w_bar))| per pair, 0 on the terminal pair
    restricted: bool


class Inexactness(NamedTuple):
    eta: float
    per_state: np.ndarray


def _runner_up_gap(model, q, best):
    starts = model.action_ptr[:-1]
    masked = q.copy()
    masked[starts + best] = np.inf
    second = np.minimum.reduceat(masked, starts)
    gap = second - q[starts + best]
    gap[model.terminal] = np.inf
    return gap


def greedy_policy(model: KernelSsp, V) -> tuple[np.ndarray, GreedyDiagnostics]:
    """Rollout policy: ``argmin_u f(x,u) + E[V(next)]`` with lowest-index tie-breaking."""
    V = check_value(V, model)
    q = q_values(model, V)
    score, pi = segment_argmin(model, q)
    score[model.terminal] = 0.0
    pi[model.terminal] = 0
    return pi, GreedyDiagnostics(pi.copy(), score, _runner_up_gap(model, q, pi))


def nominal_scores(d: DisturbanceSsp, V) -> np.ndarray:
    """``f(x,u) + V(F(x,u,w_bar))`` for every pair."""
    return d.cost + np.asarray(V, dtype=float)[d.nominal_successor()]


def expected_next_value(d: DisturbanceSsp, V) -> np.ndarray:
    """``sum_w q(w) V(F(x,u,w))`` for every pair."""
    return np.asarray(V, dtype=float)[d.successor] @ d.probs


def ce_policy(d: DisturbanceSsp, V) -> np.ndarray:
    """Certainty-equivalent policy: greedy on the nominal successor only.

    The nominal disturbance need not have positive probability.
    """
    require_valid(d)
    V = check_value(V, d)
    _, pi = segment_argmin(d, nominal_scores(d, V))
    pi[d.terminal] = 0
    return pi


def mismatch_delta(d: DisturbanceSsp, V, start: int | None = None) -> Mismatch:
    """Model-mismatch term ``delta``: the sup over nonterminal pairs of
    ``|E[V(F(x,u,w))] - V(F(x,u,w_bar))|``.

    If ``start`` is given, the sup is restricted to states reachable from it
    under the certainty-equivalent closed loop (all their actions included).
    """
    require_valid(d)
    V = check_value(V, d)
    table = np.abs(expected_next_value(d, V) - V[d.nominal_successor()])
    table[d.action_ptr[d.terminal]] = 0.0
    if start is None:
        return Mismatch(float(table.max(initial=0.0)), table, False)
    kernel = induce_kernel(d)
    reach = reachable_from(closed_loop_graph(kernel, ce_policy(d, V)), [start])
    reach[d.terminal] = False
    sel = reach[d.pair_state]
    return Mismatch(float(table[sel].max(initial=0.0)), table, True)


def eta_inexactness(model: KernelSsp, V, pi) -> Inexactness:
    """How far ``pi`` is from exactly greedy: ``eta(x) = Q_V(x, pi(x)) - min_u Q_V(x, u)``."""
    V = check_value(V, model)
    pi = check_policy(pi, model)
    q = q_values(model, V)
    best, _ = segment_argmin(model, q)
    per_state = q[model.policy_pairs(pi)] - best
    per_state[model.terminal] = 0.0
    return Inexactness(float(per_state.max(initial=0.0)), per_state)
