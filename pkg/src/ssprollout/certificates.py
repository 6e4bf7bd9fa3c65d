"""Performance certificates for rollout and certainty-equivalent rollout.

Every certificate is computed exactly on the finite model and reported next to
the quantity it bounds, so a report is both a guarantee and its own check:

* hitting-time bound ``J^pi(x) - V*(x) <= (2(eps + delta) + eta) E[tau]``,
  with the uniform-horizon (``E[tau] <= N``) and Lyapunov (``E[tau] <= L(x)/c``)
  variants;
* the performance-difference identity
  ``J^pi(x) - V*(x) = sum_y mu(y) A*(y, pi(y))``;
* the one-step residual and rollout inequalities;
* the occupation-weighted bound for state-dependent errors;
* the minimum-time specialization ``E[tau] <= H*(x) / (1 - 2(eps + delta))``.

Bounds are only produced for proper closed loops. An improper rollout or CE
policy raises :class:`~ssprollout.errors.ImproperRolloutError` (resp.
``ImproperCEError``) carrying a report with ``proper=False`` and no bounds.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (DriftViolatedError, FactorTooLargeError, ImproperCEError,
                     ImproperRolloutError)
from .exact_solver import (DEFAULT_TOL, SolveResult, advantages, any_action_graph,
                           bellman_apply, closed_loop_graph, hitting_time_exact,
                           occupation_measure, policy_evaluation_exact, properness_check,
                           q_values, reachable_from, value_iteration)
from .model import (DisturbanceSsp, KernelSsp, check_policy, check_value, induce_kernel,
                    require_valid, unit_cost)
from .rollout import ce_policy, eta_inexactness, greedy_policy, mismatch_delta

BOUND_TOL = 1e-8
IDENTITY_TOL = 1e-8
CLAMP_TOL = 1e-9
TAU_TOL = 1e-9
LEMMA_TOL = 1e-9


@dataclass
class Check:
    name: str
    passed: bool
    lhs: float
    rhs: float
    category: str = "bound"  # "bound": implied by the theorems; "assumption": user-supplied hypothesis

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "lhs": _num(self.lhs),
                "rhs": _num(self.rhs), "slack": _num(self.slack), "category": self.category}


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _le(name, lhs, rhs, tol=0.0, category="bound"):
    return Check(name, bool(lhs <= rhs + tol), float(lhs), float(rhs), category)


@dataclass
class CertificateReport:
    kind: str
    start: int
    proper: bool
    epsilon: float
    epsilon_mode: str
    delta: float = 0.0
    eta: float = 0.0
    expected_tau: float | None = None
    cost: float | None = None
    optimal_value: float | None = None
    gap: float | None = None
    gap_clamped: bool = False
    bound_hitting: float | None = None
    bound_uniform_N: float | None = None
    bound_lyapunov: float | None = None
    bound_local: float | None = None
    identity_residual: float | None = None
    N: float | None = None
    lyapunov_c: float | None = None
    policy: list = field(default_factory=list)
    occupation: list | None = None
    model_hash: str = ""
    tolerances: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    # fields compared when two certificates are claimed identical
    FIELDS = ("proper", "epsilon", "delta", "eta", "expected_tau", "cost", "optimal_value",
              "gap", "bound_hitting", "bound_uniform_N", "bound_lyapunov", "identity_residual",
              "policy")

    @property
    def passed(self) -> bool:
        return self.proper and all(c.passed for c in self.checks)

    def failed(self, category: str | None = None) -> list[Check]:
        return [c for c in self.checks if not c.passed and (category is None or c.category == category)]

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = [c.to_dict() for c in self.checks]
        for k, v in d.items():
            if isinstance(v, float):
                d[k] = _num(v)
        d["passed"] = self.passed
        return d

    TABLE_COLUMNS = ("kind", "start", "proper", "epsilon", "delta", "eta", "expected_tau", "gap",
                     "bound_hitting", "bound_uniform_N", "bound_lyapunov", "bound_local",
                     "identity_residual", "passed")

    def table_row(self) -> list:
        return [self.passed if c == "passed" else getattr(self, c) for c in self.TABLE_COLUMNS]


class PerformanceDifference(NamedTuple):
    lhs: float
    rhs: float
    residual: float


class OneStepReport(NamedTuple):
    epsilon: float
    residual: np.ndarray     # |(TV)(x) - V*(x)|
    one_step: np.ndarray     # E[f(x, pi_R(x)) + V*(next)] - V*(x), 0 at the terminal
    residual_slack: float    # eps - max residual
    one_step_slack: float    # 2 eps - max one_step
    passed: bool


class LyapunovResult(NamedTuple):
    holds: bool
    tau_bound: float
    expected_tau: float


class LocalErrorBound(NamedTuple):
    bound: float             # 2 sum_y mu(y) |V - V*|(y)
    uniform_bound: float     # 2 eps E[tau]
    successor_bound: float   # 2 sum_y mu(y) max_{successors z of y} |V - V*|(z), always valid
    one_step_holds: bool     # local one-step inequality with e(x) = 2 |V - V*|(x) along the loop
    gap: float
    per_state_error: np.ndarray


@dataclass
class MinTimeReport:
    start: int
    kind: str
    optimal_time: float
    expected_tau: float
    epsilon: float
    delta: float
    factor: float
    multiplicative: float | None
    certified_excess: float | None
    additive_N: float | None = None
    additive_lyapunov: float | None = None
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = [c.to_dict() for c in self.checks]
        for k, v in d.items():
            if isinstance(v, float):
                d[k] = _num(v)
        d["passed"] = self.passed
        return d


def epsilon_sup(V, Vstar, restrict=None) -> float:
    """``max |V(y) - V*(y)|`` over all states or over ``restrict`` (mask or indices)."""
    err = np.abs(np.asarray(V, dtype=float) - np.asarray(Vstar, dtype=float))
    if restrict is not None:
        err = err[np.asarray(restrict)]
    return float(err.max(initial=0.0))


def lookahead_states(model: KernelSsp, pi, start: int) -> np.ndarray:
    """States visited by the closed loop from ``start`` plus every one-step
    successor of every admissible action at those states.

    These are the only states at which the value error enters the one-step
    comparisons along the trajectory.
    """
    visited = reachable_from(closed_loop_graph(model, pi), [start])
    visited[model.terminal] = False
    mask = visited.copy()
    G = any_action_graph(model)
    for x in np.flatnonzero(visited):
        mask[G.indices[G.indptr[x]:G.indptr[x + 1]]] = True
    mask[model.terminal] = True
    return mask


def performance_difference(model: KernelSsp, pi, start: int, vstar=None) -> PerformanceDifference:
    """Both sides of ``J^pi(x) - V*(x) = sum_y mu(y) A*(y, pi(y))``."""
    pi = check_policy(pi, model)
    if vstar is None:
        vstar = value_iteration(model).value
    J = policy_evaluation_exact(model, pi, start).cost
    mu = occupation_measure(model, pi, start).mass
    A = advantages(model, vstar)[model.policy_pairs(pi)]
    lhs = J - vstar[start]
    rhs = float(mu @ A)
    return PerformanceDifference(float(lhs), rhs, float(abs(lhs - rhs)))


def one_step_checks(model: KernelSsp, V, vstar=None, states=None, pi=None,
                    extra: float = 0.0) -> OneStepReport:
    """Verify the residual bound ``|(TV)(x) - V*(x)| <= eps`` and the one-step
    rollout inequality ``E[f(x, pi(x)) + V*(next)] <= V*(x) + 2 eps`` (plus
    ``2 extra``; use ``extra = delta`` for the CE policy).

    ``states`` optionally restricts both checks (and ``eps``) to a subset.
    ``pi`` defaults to the rollout policy for ``V``.
    """
    V = check_value(V, model)
    if vstar is None:
        vstar = value_iteration(model).value
    TV, greedy = bellman_apply(model, V)
    if pi is None:
        pi = greedy
    mask = np.ones(model.n_states, dtype=bool) if states is None else np.asarray(states, dtype=bool)
    eps = epsilon_sup(V, vstar, None if states is None else mask)
    residual = np.abs(TV - vstar)
    one_step = q_values(model, vstar)[model.policy_pairs(pi)] - vstar
    one_step[model.terminal] = 0.0
    check_at = mask & model.nonterminal
    res_slack = eps - float(residual[mask].max(initial=0.0))
    one_slack = 2 * (eps + extra) - float(one_step[check_at].max(initial=-np.inf))
    passed = res_slack >= -LEMMA_TOL and one_slack >= -LEMMA_TOL
    return OneStepReport(eps, residual, one_step, res_slack, one_slack, passed)


def lyapunov_check(model: KernelSsp, pi, L, c: float, start: int, uniform: bool = False,
                   tol: float = LEMMA_TOL) -> LyapunovResult:
    """Verify the drift ``E[L(next) | x] <= L(x) - c`` and return ``L(start) / c``.

    The drift is checked at every nonterminal state reachable from ``start``
    under ``pi``. With ``uniform=True`` it is checked for every admissible
    action at every state reachable under any actions, which certifies every
    policy at once (``pi`` may then be ``None``).

    Raises
    ------
    DriftViolatedError
        At the lowest-index failing state (and action, if uniform).
    """
    L = np.asarray(L, dtype=float)
    if L.shape != (model.n_states,) or not np.all(np.isfinite(L)) or np.any(L < 0):
        raise ValueError("L must be a finite nonnegative array over states")
    if not c > 0:
        raise ValueError("drift constant c must be positive")
    drift = model.transition @ L
    if uniform:
        reach = reachable_from(any_action_graph(model), [start])
        pairs = np.flatnonzero(reach[model.pair_state] & (model.pair_state != model.terminal))
    else:
        pi = check_policy(pi, model)
        reach = reachable_from(closed_loop_graph(model, pi), [start])
        reach[model.terminal] = False
        pairs = model.policy_pairs(pi)[np.flatnonzero(reach)]
    for k in pairs:
        x = int(model.pair_state[k])
        if drift[k] > L[x] - c + tol:
            raise DriftViolatedError(x, int(k - model.action_ptr[x]) if uniform else None,
                                     float(drift[k]), float(L[x] - c))
    bound = float(L[start] / c)
    if pi is None:
        return LyapunovResult(True, bound, float("nan"))
    tau = hitting_time_exact(model, pi, start)
    # drift with c > 0 forces properness and E[tau] <= L/c
    assert tau.proper and tau.expected <= bound + TAU_TOL, (tau, bound)
    return LyapunovResult(True, bound, tau.expected)


def _solve(model, vstar):
    if vstar is None:
        return value_iteration(model).value
    if isinstance(vstar, SolveResult):
        return vstar.value
    return check_value(vstar, model, "Vstar")


def _certify(kind, kernel, V, vstar, pi, start, delta, eta, N, lyapunov, restrict_eps,
             local_eps, model_hash, improper_error):
    t = kernel.terminal
    if restrict_eps:
        eps = epsilon_sup(V, vstar, lookahead_states(kernel, pi, start))
        mode = "lookahead"
    else:
        eps = epsilon_sup(V, vstar)
        mode = "global"
    report = CertificateReport(
        kind=kind, start=int(start), proper=False, epsilon=eps, epsilon_mode=mode,
        delta=float(delta), eta=float(eta), policy=[int(a) for a in pi], model_hash=model_hash,
        tolerances={"bound": BOUND_TOL, "identity": IDENTITY_TOL, "clamp": CLAMP_TOL,
                    "hitting_time": TAU_TOL, "solver": DEFAULT_TOL},
        N=None if N is None else float(N),
        lyapunov_c=None if lyapunov is None else float(lyapunov[1]))
    if not properness_check(kernel, pi, start):
        raise improper_error(start, report)
    report.proper = True

    J = policy_evaluation_exact(kernel, pi, start).cost
    gap = J - vstar[start]
    report.cost, report.optimal_value = float(J), float(vstar[start])
    checks = report.checks
    checks.append(_le("gap_nonnegative", -gap, CLAMP_TOL))
    if -CLAMP_TOL <= gap < 0:
        gap, report.gap_clamped = 0.0, True
    report.gap = float(gap)

    tau = hitting_time_exact(kernel, pi, start).expected
    mu = occupation_measure(kernel, pi, start)
    report.expected_tau = float(tau)
    report.occupation = [float(m) for m in mu.mass]
    checks.append(_le("occupation_mass", abs(mu.total - tau), 0.0, TAU_TOL))

    adv = advantages(kernel, vstar)[kernel.policy_pairs(pi)]
    pd_lhs = J - vstar[start]
    report.identity_residual = float(abs(pd_lhs - mu.mass @ adv))
    checks.append(_le("performance_difference", report.identity_residual, IDENTITY_TOL))

    rate = 2 * (eps + delta) + eta
    report.bound_hitting = float(rate * tau)
    checks.append(_le("hitting_time_bound", gap, report.bound_hitting, BOUND_TOL))

    states = lookahead_states(kernel, pi, start) if restrict_eps else None
    steps = one_step_checks(kernel, V, vstar, states=states, pi=pi, extra=delta + eta / 2)
    checks.append(Check("residual_bound", steps.residual_slack >= -LEMMA_TOL,
                        steps.epsilon - steps.residual_slack, steps.epsilon))
    name = "one_step_rollout" if kind == "rollout" else "one_step_ce"
    rhs = 2 * (steps.epsilon + delta) + eta
    checks.append(Check(name, steps.one_step_slack >= -LEMMA_TOL, rhs - steps.one_step_slack, rhs))

    if N is not None:
        checks.append(_le("uniform_hitting_assumption", tau, N, TAU_TOL, category="assumption"))
        report.bound_uniform_N = float(rate * N)
        checks.append(_le("uniform_hitting_bound", gap, report.bound_uniform_N, BOUND_TOL))
    if lyapunov is not None:
        L, c = lyapunov
        try:
            ly = lyapunov_check(kernel, pi, L, c, start)
        except DriftViolatedError as exc:
            checks.append(Check("lyapunov_drift", False, exc.lhs, exc.rhs, "assumption"))
        else:
            checks.append(Check("lyapunov_drift", True, float("nan"), float("nan"), "assumption"))
            checks.append(_le("lyapunov_hitting_time", tau, ly.tau_bound, TAU_TOL))
            report.bound_lyapunov = float(rate * ly.tau_bound)
            checks.append(_le("lyapunov_bound", gap, report.bound_lyapunov, BOUND_TOL))
            checks.append(_le("lyapunov_not_tighter", report.bound_hitting, report.bound_lyapunov,
                              BOUND_TOL))
    if local_eps:
        err = np.abs(V - vstar)
        local = 2 * float(mu.mass @ err)
        report.bound_local = local
        checks.append(_le("local_below_uniform", local, 2 * epsilon_sup(V, vstar) * tau, 1e-10))
    return report


def rollout_certificate(model: KernelSsp, V, start: int, N: float | None = None,
                        lyapunov: tuple | None = None, restrict_eps: bool = False,
                        local_eps: bool = False, vstar=None) -> CertificateReport:
    """Certify the rollout policy built from ``V`` at initial state ``start``.

    Parameters
    ----------
    model : KernelSsp
    V : array_like
        Approximate value function (zero at the terminal state).
    start : int
    N : float, optional
        Claimed uniform bound on ``E[tau]``; checked, and ``2 eps N`` reported.
    lyapunov : (L, c), optional
        Drift certificate; verified along the rollout closed loop and
        ``2 eps L(start) / c`` reported.
    restrict_eps : bool
        Measure ``eps`` only over the states the closed loop looks at.
    local_eps : bool
        Also report the occupation-weighted bound ``2 sum mu(y) |V - V*|(y)``.
    vstar : array_like or SolveResult, optional
        Precomputed optimal value.
    """
    require_valid(model)
    V = check_value(V, model)
    vstar = _solve(model, vstar)
    pi, _ = greedy_policy(model, V)
    return _certify("rollout", model, V, vstar, pi, start, 0.0, 0.0, N, lyapunov, restrict_eps,
                    local_eps, model.digest(), ImproperRolloutError)


def ce_certificate(d: DisturbanceSsp, V, start: int, N: float | None = None,
                   lyapunov: tuple | None = None, restrict_eps: bool = False,
                   local_eps: bool = False, vstar=None) -> CertificateReport:
    """Certify the certainty-equivalent policy: ``gap <= 2 (eps + delta) E[tau]``.

    ``delta`` is the global mismatch sup, or the sup over CE-reachable states
    when ``restrict_eps`` is set.
    """
    require_valid(d)
    V = check_value(V, d)
    kernel = induce_kernel(d)
    vstar = _solve(kernel, vstar)
    pi = ce_policy(d, V)
    delta = mismatch_delta(d, V, start if restrict_eps else None).delta
    report = _certify("ce", kernel, V, vstar, pi, start, delta, 0.0, N, lyapunov, restrict_eps,
                      local_eps, d.digest(), ImproperCEError)
    eta = eta_inexactness(kernel, V, pi).eta
    report.checks.append(_le("ce_greedy_inexactness", eta, 2 * delta, 1e-12))
    return report


def local_error_bound(model: KernelSsp, V, start: int, vstar=None) -> LocalErrorBound:
    """Occupation-weighted bound for a state-dependent value error.

    ``bound = 2 sum_y mu(y) |V - V*|(y)`` is guaranteed to dominate the gap when
    the local one-step inequality holds with ``e(x) = 2 |V - V*|(x)`` along the
    closed loop (``one_step_holds``). ``successor_bound`` uses the largest error
    among the one-step successors of each visited state instead and holds
    unconditionally.
    """
    V = check_value(V, model)
    vstar = _solve(model, vstar)
    pi, _ = greedy_policy(model, V)
    if not properness_check(model, pi, start):
        raise ImproperRolloutError(start)
    mu = occupation_measure(model, pi, start).mass
    tau = float(mu.sum())
    err = np.abs(V - vstar)
    bound = 2 * float(mu @ err)
    G = any_action_graph(model)
    succ_err = np.array([err[G.indices[G.indptr[x]:G.indptr[x + 1]]].max(initial=0.0)
                         for x in range(model.n_states)])
    successor_bound = 2 * float(mu @ succ_err)
    one_step = q_values(model, vstar)[model.policy_pairs(pi)] - vstar
    visited = mu > 0
    holds = bool(np.all(one_step[visited] <= 2 * err[visited] + LEMMA_TOL))
    gap = policy_evaluation_exact(model, pi, start).cost - vstar[start]
    return LocalErrorBound(bound, 2 * epsilon_sup(V, vstar) * tau, successor_bound, holds,
                           float(gap), err)


def min_time_certificate(model, V, start: int, N: float | None = None,
                         lyapunov: tuple | None = None) -> MinTimeReport:
    """Minimum-expected-hitting-time certificate.

    ``model`` is a :class:`KernelSsp` (exact rollout) or a
    :class:`DisturbanceSsp` (certainty-equivalent rollout); its costs are
    replaced by unit costs. With ``H*`` the minimum expected hitting time and
    ``eps = ||V - H*||``, the rollout closed loop satisfies
    ``E[tau] <= H*(x) / (1 - 2 (eps + delta))`` whenever ``2 (eps + delta) < 1``.

    Raises
    ------
    FactorTooLargeError
        If ``2 (eps + delta) >= 1``; the exception carries the report with the
        additive variants filled in.
    """
    ce = isinstance(model, DisturbanceSsp)
    unit = unit_cost(model)
    kernel = induce_kernel(unit) if ce else unit
    V = check_value(V, kernel)
    hstar = value_iteration(kernel).value
    if ce:
        pi = ce_policy(unit, V)
        delta = mismatch_delta(unit, V).delta
        error = ImproperCEError
    else:
        pi, _ = greedy_policy(kernel, V)
        delta = 0.0
        error = ImproperRolloutError
    tau = hitting_time_exact(kernel, pi, start)
    if not tau.proper:
        raise error(start)
    eps = epsilon_sup(V, hstar)
    factor = 2 * (eps + delta)
    h = float(hstar[start])
    report = MinTimeReport(int(start), "ce" if ce else "rollout", h, tau.expected, eps, delta,
                           factor, None, None)
    checks = report.checks
    checks.append(_le("additive_hitting_bound", tau.expected, h + factor * tau.expected, BOUND_TOL))
    if N is not None:
        checks.append(_le("uniform_hitting_assumption", tau.expected, N, TAU_TOL, "assumption"))
        report.additive_N = h + factor * N
        checks.append(_le("additive_N_bound", tau.expected, report.additive_N, BOUND_TOL))
    if lyapunov is not None:
        L, c = lyapunov
        try:
            ly = lyapunov_check(kernel, pi, L, c, start)
        except DriftViolatedError as exc:
            checks.append(Check("lyapunov_drift", False, exc.lhs, exc.rhs, "assumption"))
        else:
            report.additive_lyapunov = h + factor * ly.tau_bound
            checks.append(_le("additive_lyapunov_bound", tau.expected, report.additive_lyapunov,
                              BOUND_TOL))
    if factor >= 1:
        raise FactorTooLargeError(factor, report)
    report.multiplicative = h / (1 - factor)
    report.certified_excess = report.multiplicative - h
    checks.append(_le("multiplicative_bound", tau.expected, report.multiplicative, BOUND_TOL))
    return report


def sharpness_ratio(report: CertificateReport) -> float:
    """``gap / (eps E[tau])``; lies in ``[1/4, 2]`` on the sharpness family."""
    return report.gap / (report.epsilon * report.expected_tau)


def certificate_table(reports: Sequence[CertificateReport]) -> list[list]:
    return [list(CertificateReport.TABLE_COLUMNS)] + [r.table_row() for r in reports]
