"""Exact dynamic programming on finite SSPs.

Everything here works on :class:`~ssprollout.model.KernelSsp`. Linear systems
are restricted to the nonterminal states from which the closed loop is proper
and solved densely (LAPACK ``gesv``, LU with partial pivoting).
"""
from __future__ import annotations

import logging
import os
from collections import deque
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import (ImproperPolicyError, NoProperPolicyError, NotConvergedError,
                     SingularSystemError)
from .model import KernelSsp, check_policy, check_value, require_valid

logger = logging.getLogger(__name__)

DEFAULT_TOL = float(os.environ.get("SSPROLLOUT_TOL", "1e-10"))
DEFAULT_MAX_ITERS = 10**6


class SolveResult(NamedTuple):
    value: np.ndarray
    greedy: np.ndarray
    iterations: int
    residual: float
    greedy_proper: bool


class PolicyEvaluation(NamedTuple):
    cost: float
    values: np.ndarray  # J^pi on proper states, nan elsewhere


class HittingTime(NamedTuple):
    expected: float  # math.inf when improper
    proper: bool


class OccupationMeasure(NamedTuple):
    mass: np.ndarray
    start: int

    @property
    def total(self) -> float:
        return float(self.mass.sum())


def q_values(model: KernelSsp, V) -> np.ndarray:
    """One-step lookahead score ``f(x, u) + sum_y p(y|x,u) V(y)`` for every pair."""
    return model.cost + model.transition @ np.asarray(V, dtype=float)


def segment_argmin(model, q) -> tuple[np.ndarray, np.ndarray]:
    """Per-state minimum of pair scores and the lowest minimizing action index."""
    starts = model.action_ptr[:-1]
    mins = np.minimum.reduceat(q, starts)
    hit = np.flatnonzero(q == mins[model.pair_state])
    states = model.pair_state[hit]
    _, first = np.unique(states, return_index=True)
    choice = hit[first] - starts
    return mins, choice.astype(np.int64)


def bellman_apply(model: KernelSsp, V) -> tuple[np.ndarray, np.ndarray]:
    """Apply the Bellman operator.

    Returns
    -------
    TV : ndarray
        ``(TV)(x) = min_u [f(x,u) + E V(next)]`` and ``(TV)(t) = 0``.
    greedy : ndarray of int
        Minimizing action per state, lowest index on ties; 0 at the terminal.
    """
    V = check_value(V, model)
    TV, greedy = segment_argmin(model, q_values(model, V))
    TV[model.terminal] = 0.0
    greedy[model.terminal] = 0
    return TV, greedy


def _bfs(indptr, indices, sources, n):
    seen = np.zeros(n, dtype=bool)
    queue = deque()
    for s in sources:
        if not seen[s]:
            seen[s] = True
            queue.append(s)
    while queue:
        x = queue.popleft()
        for y in indices[indptr[x]:indptr[x + 1]]:
            if not seen[y]:
                seen[y] = True
                queue.append(y)
    return seen


def _support_graph(P: sp.csr_matrix) -> sp.csr_matrix:
    G = P.copy()
    G.data = (G.data > 0).astype(np.int8)
    G.eliminate_zeros()
    return G.tocsr()


def reachable_from(G: sp.csr_matrix, sources) -> np.ndarray:
    """Boolean mask of states reachable from ``sources`` in the support graph ``G``."""
    return _bfs(G.indptr, G.indices, list(sources), G.shape[0])


def can_reach(G: sp.csr_matrix, targets) -> np.ndarray:
    """Boolean mask of states with a path into ``targets``."""
    R = G.T.tocsr()
    return _bfs(R.indptr, R.indices, list(targets), G.shape[0])


def any_action_graph(model: KernelSsp) -> sp.csr_matrix:
    """State graph with an edge x -> y if some admissible action can move x to y."""
    P = _support_graph(model.transition).tocoo()
    G = sp.csr_matrix((np.ones(P.nnz, dtype=np.int8), (model.pair_state[P.row], P.col)),
                      shape=(model.n_states, model.n_states))
    G.sum_duplicates()
    return G


def closed_loop_graph(model: KernelSsp, pi) -> sp.csr_matrix:
    return _support_graph(model.policy_matrix(pi))


def proper_states(model: KernelSsp, pi) -> np.ndarray:
    """Mask of states from which ``pi`` reaches the terminal state with probability 1.

    A state is proper iff every state reachable from it can still reach the
    terminal state; on a finite chain this is exactly almost-sure absorption.
    """
    G = closed_loop_graph(model, pi)
    trapped = ~can_reach(G, [model.terminal])
    return ~can_reach(G, np.flatnonzero(trapped))


def properness_check(model: KernelSsp, pi, start: int) -> bool:
    pi = check_policy(pi, model)
    G = closed_loop_graph(model, pi)
    reach = reachable_from(G, [start])
    ok = can_reach(G, [model.terminal])
    return bool(np.all(ok[reach]))


def _closed_loop_system(model, pi, start):
    pi = check_policy(pi, model)
    proper = proper_states(model, pi)
    if not proper[start]:
        raise ImproperPolicyError(start)
    idx = np.flatnonzero(proper & model.nonterminal)
    pairs = model.policy_pairs(pi)[idx]
    Q = model.transition[pairs][:, idx].toarray()
    A = np.eye(len(idx)) - Q
    return pi, idx, pairs, A


def _solve(A, b, transpose=False):
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    if np.any(np.diag(lu) == 0):
        raise SingularSystemError("closed-loop system (I - Q) is singular")
    return scipy.linalg.lu_solve((lu, piv), b, trans=1 if transpose else 0)


def policy_evaluation_exact(model: KernelSsp, pi, start: int) -> PolicyEvaluation:
    """Exact total cost ``J^pi`` by solving ``(I - Q_pi) J = f_pi``.

    ``values`` holds ``J^pi`` on every state from which ``pi`` is proper (so the
    system is solved once for all of them) and ``nan`` elsewhere.

    Raises
    ------
    ImproperPolicyError
        If ``pi`` is not proper from ``start``.
    """
    pi, idx, pairs, A = _closed_loop_system(model, pi, start)
    J = np.full(model.n_states, np.nan)
    J[model.terminal] = 0.0
    J[idx] = _solve(A, model.cost[pairs])
    return PolicyEvaluation(float(J[start]), J)


def hitting_times(model: KernelSsp, pi) -> np.ndarray:
    """Expected hitting time of the terminal state from every state (``inf`` where improper)."""
    pi = check_policy(pi, model)
    proper = proper_states(model, pi)
    h = np.full(model.n_states, np.inf)
    h[model.terminal] = 0.0
    idx = np.flatnonzero(proper & model.nonterminal)
    if len(idx):
        Q = model.transition[model.policy_pairs(pi)[idx]][:, idx].toarray()
        h[idx] = _solve(np.eye(len(idx)) - Q, np.ones(len(idx)))
    return h


def hitting_time_exact(model: KernelSsp, pi, start: int) -> HittingTime:
    """``E[tau]`` from ``start``; improper closed loops give ``(inf, False)``."""
    try:
        _, idx, pairs, A = _closed_loop_system(model, pi, start)
    except ImproperPolicyError:
        return HittingTime(np.inf, False)
    if start == model.terminal:
        return HittingTime(0.0, True)
    h = _solve(A, np.ones(len(idx)))
    return HittingTime(float(h[np.searchsorted(idx, start)]), True)


def occupation_measure(model: KernelSsp, pi, start: int) -> OccupationMeasure:
    """Expected number of pre-absorption visits to each state.

    Solves ``mu^T (I - Q_pi) = e_start^T``; the terminal entry is zero and the
    total mass equals ``E[tau]``.
    """
    _, idx, _, A = _closed_loop_system(model, pi, start)
    mu = np.zeros(model.n_states)
    if start != model.terminal:
        e = (idx == start).astype(float)
        mu[idx] = _solve(A, e, transpose=True)
    return OccupationMeasure(mu, int(start))


def check_proper_policy_exists(model: KernelSsp) -> None:
    ok = can_reach(any_action_graph(model), [model.terminal])
    if not np.all(ok):
        raise NoProperPolicyError(np.flatnonzero(~ok).tolist())


def value_iteration(model: KernelSsp, tol: float = DEFAULT_TOL,
                    max_iters: int = DEFAULT_MAX_ITERS) -> SolveResult:
    """Compute the optimal value ``V*`` by value iteration from ``V = 0``.

    With nonnegative costs the iterates increase monotonically to the least
    nonnegative fixed point. Once the sup-norm residual ``||TV - V||`` drops
    below ``tol`` the Bellman-greedy policy is evaluated exactly; if it is
    proper everywhere and its value has a residual no larger than the VI
    iterate, that exact value is returned instead (it is typically accurate to
    machine precision rather than to ``tol`` times the hitting time).
    """
    require_valid(model)
    check_proper_policy_exists(model)
    V = np.zeros(model.n_states)
    t = model.terminal
    residual = np.inf
    for it in range(1, max_iters + 1):
        TV, greedy = segment_argmin(model, q_values(model, V))
        TV[t] = 0.0
        residual = float(np.max(np.abs(TV - V)))
        if residual < tol:
            break
        V = TV
    else:
        raise NotConvergedError(max_iters, residual)
    greedy[t] = 0

    proper = proper_states(model, greedy)
    if np.all(proper):
        J = policy_evaluation_exact(model, greedy, t).values
        TJ, greedy_J = segment_argmin(model, q_values(model, J))
        TJ[t] = 0.0
        res_J = float(np.max(np.abs(TJ - J)))
        if res_J <= residual and np.all(J >= -tol):
            greedy_J[t] = 0
            return SolveResult(J, greedy_J, it, res_J, bool(np.all(proper_states(model, greedy_J))))
    else:
        logger.warning("greedy policy for the VI fixed point is improper at %d states "
                       "(zero-cost cycle?)", int(np.sum(~proper)))
    return SolveResult(V, greedy, it, residual, bool(np.all(proper)))


def advantages(model: KernelSsp, Vstar) -> np.ndarray:
    """Optimal advantage ``A*(x, u)`` for every pair (zero on the terminal pair)."""
    Vstar = check_value(Vstar, model, "Vstar")
    A = q_values(model, Vstar) - Vstar[model.pair_state]
    A[model.action_ptr[model.terminal]] = 0.0
    return A


def advantage(model: KernelSsp, Vstar, x: int, u: int) -> float:
    """``A*(x, u) = f(x, u) + E[V*(next)] - V*(x)``."""
    if x == model.terminal:
        raise ValueError("advantage is defined for nonterminal states only")
    Vstar = check_value(Vstar, model, "Vstar")
    ys, ps = model.row(x, u)
    return float(model.state_cost(x, u) + ps @ Vstar[ys] - Vstar[x])
