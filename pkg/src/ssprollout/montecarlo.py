"""Seeded closed-loop simulation.

Random numbers come from a counter-based SplitMix64 construction, so every
draw is a pure function of ``(seed, replication, step)``:

    mix64(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
               z ^= z >> 27; z *= 0x94D049BB133111EB
               z ^= z >> 31                                   (all mod 2**64)
    key(seed, r)   = mix64(mix64(seed) + (r + 1) * 0x9E3779B97F4A7C15)
    u(seed, r, k)  = (mix64(key(seed, r) + (k + 1) * 0x9E3779B97F4A7C15) >> 11) * 2**-53

Replication ``r`` of a run uses the stream ``key(seed, r)`` and consumes
exactly one uniform per step: in kernel form it selects the successor by
inverse CDF over the sparse row (successors in increasing index order); in
disturbance form it selects ``w`` by inverse CDF over ``q`` and the successor
is ``F(x, u, w)``. Estimates are therefore identical whether replications run
serially, in chunks, or in parallel.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import NamedTuple

import numpy as np

from .model import DisturbanceSsp, KernelSsp, check_policy, require_valid

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO53 = 2.0**-53

Z99 = NormalDist().inv_cdf(0.995)
DEFAULT_MAX_STEPS = 10**6
DEFAULT_CHUNK = 1 << 16


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = z ^ (z >> _S30)
    z = z * _M1
    z = z ^ (z >> _S27)
    z = z * _M2
    return z ^ (z >> _S31)


def stream_keys(seed: int, replications) -> np.ndarray:
    base = mix64(np.array([seed % 2**64], dtype=np.uint64))
    r = np.asarray(replications, dtype=np.uint64)
    return mix64(base + (r + np.uint64(1)) * GOLDEN)


def uniforms(keys: np.ndarray, step: int) -> np.ndarray:
    """The ``step``-th uniform in [0, 1) of each stream."""
    offset = np.uint64((step + 1) * int(GOLDEN) % 2**64)
    z = mix64(keys + offset)
    return (z >> _S11).astype(np.float64) * _TWO53


class _Sampler:
    """Inverse-CDF successor sampling for either model form."""

    def __init__(self, model):
        self.model = model
        if isinstance(model, KernelSsp):
            P = model.transition
            lengths = np.diff(P.indptr)
            width = int(lengths.max(initial=1))
            self.succ = np.full((model.n_pairs, width), -1, dtype=np.int64)
            self.cum = np.full((model.n_pairs, width), np.inf)
            for k in range(model.n_pairs):
                lo, hi = P.indptr[k], P.indptr[k + 1]
                self.succ[k, :hi - lo] = P.indices[lo:hi]
                self.cum[k, :hi - lo] = np.cumsum(P.data[lo:hi])
            self.lengths = lengths
        else:
            self.q_cum = np.cumsum(model.probs)

    def step(self, pairs: np.ndarray, u: np.ndarray) -> np.ndarray:
        if isinstance(self.model, KernelSsp):
            idx = np.sum(self.cum[pairs] <= u[:, None], axis=1)
            idx = np.minimum(idx, self.lengths[pairs] - 1)
            return self.succ[pairs, idx]
        w = np.minimum(np.searchsorted(self.q_cum, u, side="right"), len(self.q_cum) - 1)
        return self.model.successor[pairs, w]


@dataclass
class Trajectory:
    states: list
    actions: list
    costs: list
    tau: int
    truncated: bool

    @property
    def total_cost(self) -> float:
        total = 0.0
        for c in self.costs:
            total += c
        return total

    def to_rows(self) -> list[list]:
        """Per-step table ``k, state, action, cost`` (debug dump)."""
        return [[k, s, a, c] for k, (s, a, c) in enumerate(zip(self.states, self.actions, self.costs))]


@dataclass
class EstimateReport:
    mean_cost: float
    mean_tau: float
    std_cost: float
    std_tau: float
    replications: int
    seed: int
    truncated: int
    half_width_cost: float
    half_width_tau: float
    max_steps: int

    @property
    def valid(self) -> bool:
        return self.truncated == 0

    def covers(self, cost: float | None = None, tau: float | None = None,
               slack: float = 1e-9) -> bool:
        """Whether the 99% intervals contain the given exact values.

        ``slack`` is a floating-point floor (relative to ``max(1, |value|)``)
        that matters only for degenerate zero-variance estimates.
        """
        ok = True
        if cost is not None:
            ok &= abs(self.mean_cost - cost) <= self.half_width_cost + slack * max(1.0, abs(cost))
        if tau is not None:
            ok &= abs(self.mean_tau - tau) <= self.half_width_tau + slack * max(1.0, abs(tau))
        return bool(ok)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid"] = self.valid
        d["confidence"] = 0.99
        return d


def simulate(model, pi, start: int, seed: int, max_steps: int = DEFAULT_MAX_STEPS,
             replication: int = 0) -> Trajectory:
    """Simulate one closed-loop trajectory (replication ``replication`` of ``seed``)."""
    require_valid(model)
    pi = check_policy(pi, model)
    sampler = _Sampler(model)
    key = stream_keys(seed, [replication])
    x = int(start)
    states, actions, costs = [x], [], []
    k = 0
    while x != model.terminal and k < max_steps:
        pair = int(model.action_ptr[x] + pi[x])
        actions.append(int(pi[x]))
        costs.append(float(model.cost[pair]))
        x = int(sampler.step(np.array([pair]), uniforms(key, k))[0])
        states.append(x)
        k += 1
    truncated = x != model.terminal
    return Trajectory(states, actions, costs, k, truncated)


def _run_chunk(model, sampler, pi, start, keys, max_steps):
    n = len(keys)
    cost = np.zeros(n)
    tau = np.zeros(n, dtype=np.int64)
    x = np.full(n, start, dtype=np.int64)
    active = np.flatnonzero(x != model.terminal)
    k = 0
    pairs_of = model.action_ptr[:-1] + pi
    while len(active) and k < max_steps:
        pairs = pairs_of[x[active]]
        cost[active] += model.cost[pairs]
        tau[active] += 1
        x[active] = sampler.step(pairs, uniforms(keys[active], k))
        active = active[x[active] != model.terminal]
        k += 1
    return cost, tau, len(active)


def estimate(model, pi, start: int, replications: int, seed: int,
             max_steps: int = DEFAULT_MAX_STEPS, chunk_size: int = DEFAULT_CHUNK) -> EstimateReport:
    """Empirical ``J^pi(start)`` and ``E[tau]`` with 99% normal-approximation intervals.

    Truncated replications (still running after ``max_steps``) are counted and
    make the report invalid; their partial sums are included in the means.
    """
    require_valid(model)
    pi = check_policy(pi, model)
    sampler = _Sampler(model)
    costs = np.empty(replications)
    taus = np.empty(replications, dtype=np.int64)
    truncated = 0
    for lo in range(0, replications, chunk_size):
        hi = min(lo + chunk_size, replications)
        keys = stream_keys(seed, np.arange(lo, hi))
        c, t, tr = _run_chunk(model, sampler, pi, int(start), keys, max_steps)
        costs[lo:hi], taus[lo:hi] = c, t
        truncated += tr
    return summarize(costs, taus.astype(float), seed, truncated, max_steps)


def summarize(costs, taus, seed, truncated, max_steps) -> EstimateReport:
    n = len(costs)
    mean_c = float(np.sum(costs) / n) if n else math.nan
    mean_t = float(np.sum(taus) / n) if n else math.nan
    std_c = float(np.std(costs, ddof=1)) if n > 1 else 0.0
    std_t = float(np.std(taus, ddof=1)) if n > 1 else 0.0
    hw = Z99 / math.sqrt(n) if n else math.nan
    return EstimateReport(mean_c, mean_t, std_c, std_t, n, int(seed), int(truncated),
                          hw * std_c, hw * std_t, int(max_steps))


class CrossCheck(NamedTuple):
    estimate: EstimateReport
    exact_cost: float
    exact_tau: float
    passed: bool


def cross_check(model, pi, start: int, replications: int, seed: int,
                max_steps: int = DEFAULT_MAX_STEPS) -> CrossCheck:
    """Compare a simulation estimate against the exact cost and hitting time."""
    from .exact_solver import hitting_time_exact, policy_evaluation_exact
    from .model import induce_kernel

    kernel = induce_kernel(model) if isinstance(model, DisturbanceSsp) else model
    exact_cost = policy_evaluation_exact(kernel, pi, start).cost
    exact_tau = hitting_time_exact(kernel, pi, start).expected
    est = estimate(model, pi, start, replications, seed, max_steps)
    return CrossCheck(est, exact_cost, exact_tau,
                      est.valid and est.covers(exact_cost, exact_tau))
