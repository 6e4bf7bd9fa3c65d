"""Finite SSP model containers.

Two representations are supported:

* :class:`KernelSsp` stores the controlled transition kernel ``p(y | x, u)``
  directly as a sparse matrix with one row per admissible state-action pair.
* :class:`DisturbanceSsp` stores a successor table ``F(x, u, w)`` over a finite
  i.i.d. disturbance distribution ``q(w)`` with a designated nominal
  disturbance, which is what certainty-equivalent planning needs.

Both share the same "pair" layout: the admissible actions of state ``x`` occupy
the pair indices ``action_ptr[x]:action_ptr[x + 1]`` in action order. The
terminal state carries exactly one action (``"stop"``) that self-loops at zero
cost.

Value functions and policies are plain numpy arrays indexed by state; use
:func:`check_value` and :func:`check_policy` to validate them against a model.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import InvalidModelError

STOP = "stop"
PROB_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    kind: str
    state: int | None = None
    action: int | None = None
    detail: str = ""

    def __str__(self):
        where = []
        if self.state is not None:
            where.append(f"state={self.state}")
        if self.action is not None:
            where.append(f"action={self.action}")
        loc = f" ({', '.join(where)})" if where else ""
        return f"{self.kind}{loc}: {self.detail}" if self.detail else f"{self.kind}{loc}"


def _readonly(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def _normalize_actions(n_states, terminal, actions):
    out = []
    for x in range(n_states):
        labels = tuple(str(a) for a in actions[x]) if x < len(actions) else ()
        if x == terminal and not labels:
            labels = (STOP,)
        out.append(labels)
    return tuple(out)


class _PairLayout:
    """Index bookkeeping shared by both model forms."""

    n_states: int
    terminal: int
    actions: tuple

    def _init_layout(self):
        counts = np.array([len(a) for a in self.actions], dtype=np.int64)
        ptr = np.zeros(self.n_states + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        object.__setattr__(self, "action_ptr", _readonly(ptr))
        object.__setattr__(self, "pair_state", _readonly(np.repeat(np.arange(self.n_states), counts)))

    @property
    def n_pairs(self) -> int:
        return int(self.action_ptr[-1])

    def n_actions(self, x: int) -> int:
        return int(self.action_ptr[x + 1] - self.action_ptr[x])

    def pair(self, x: int, u: int) -> int:
        """Flat pair index of action ``u`` at state ``x``."""
        if not 0 <= u < self.n_actions(x):
            raise IndexError(f"action {u} not admissible at state {x}")
        return int(self.action_ptr[x] + u)

    def policy_pairs(self, pi) -> np.ndarray:
        return self.action_ptr[:-1] + np.asarray(pi, dtype=np.int64)

    @property
    def nonterminal(self) -> np.ndarray:
        mask = np.ones(self.n_states, dtype=bool)
        mask[self.terminal] = False
        return mask

    def state_cost(self, x: int, u: int) -> float:
        return float(self.cost[self.pair(x, u)])

    def _layout_violations(self):
        out = []
        if not 0 <= self.terminal < self.n_states:
            out.append(Violation("terminal_out_of_range", detail=f"terminal={self.terminal}"))
            return out
        for x in range(self.n_states):
            if self.n_actions(x) == 0:
                out.append(Violation("no_actions", x, detail="state has no admissible action"))
        if self.n_actions(self.terminal) != 1:
            out.append(Violation("terminal_actions", self.terminal,
                                 detail=f"terminal must have exactly one action, has {self.n_actions(self.terminal)}"))
        for k in range(self.n_pairs):
            c = self.cost[k]
            x = int(self.pair_state[k])
            u = int(k - self.action_ptr[x])
            if not math.isfinite(c):
                out.append(Violation("nonfinite_cost", x, u, f"cost={c!r}"))
            elif c < 0:
                out.append(Violation("negative_cost", x, u, f"cost={c!r}"))
        k_t = int(self.action_ptr[self.terminal])
        if self.n_actions(self.terminal) >= 1 and self.cost[k_t] != 0:
            out.append(Violation("terminal_cost", self.terminal, 0, f"cost={self.cost[k_t]!r}, must be 0"))
        return out


@dataclass(frozen=True, eq=False)
class KernelSsp(_PairLayout):
    """Finite SSP in transition-kernel form.

    Parameters
    ----------
    n_states : int
        Number of states, terminal included.
    terminal : int
        Index of the absorbing terminal state.
    actions : tuple of tuple of str
        Admissible action labels per state; the terminal state has ``("stop",)``.
    transition : scipy.sparse.csr_matrix, shape (n_pairs, n_states)
        Row ``action_ptr[x] + u`` is ``p(. | x, u)``.
    cost : ndarray, shape (n_pairs,)
        Stage cost ``f(x, u)``.
    """

    n_states: int
    terminal: int
    actions: tuple
    transition: sp.csr_matrix
    cost: np.ndarray
    action_ptr: np.ndarray = field(init=False, repr=False)
    pair_state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cost", _readonly(np.asarray(self.cost, dtype=float)))
        self._init_layout()
        P = sp.csr_matrix(self.transition, dtype=float, copy=True)
        P.sum_duplicates()
        P.sort_indices()
        P.data.flags.writeable = False
        object.__setattr__(self, "transition", P)
        if P.shape != (self.n_pairs, self.n_states):
            raise InvalidModelError([Violation(
                "shape", detail=f"transition shape {P.shape} != ({self.n_pairs}, {self.n_states})")])
        if self.cost.shape != (self.n_pairs,):
            raise InvalidModelError([Violation("shape", detail=f"cost shape {self.cost.shape}")])

    @classmethod
    def from_rows(cls, n_states: int, terminal: int, actions: Sequence[Sequence[str]],
                  rows, costs) -> "KernelSsp":
        """Build from nested per-state, per-action rows.

        ``rows[x][u]`` is an iterable of ``(successor, probability)`` pairs or a
        mapping ``successor -> probability``; ``costs[x][u]`` is the stage cost.
        Entries for the terminal state may be omitted, in which case the
        canonical zero-cost self-loop is used. Rows whose sum is within 1e-9 of
        one (beyond rounding) are renormalized; others are kept as given so that :func:`validate`
        reports them.
        """
        actions = _normalize_actions(n_states, terminal, actions)
        problems = []
        indptr = [0]
        indices, data, cost = [], [], []
        for x in range(n_states):
            for u in range(len(actions[x])):
                try:
                    row = rows[x][u]
                    c = costs[x][u]
                except (IndexError, KeyError, TypeError):
                    if x == terminal:
                        row, c = [(terminal, 1.0)], 0.0
                    else:
                        problems.append(Violation("missing_row", x, u))
                        row, c = [], 0.0
                items = list(row.items()) if isinstance(row, Mapping) else [tuple(e) for e in row]
                merged: dict[int, float] = {}
                for y, p in items:
                    y = int(y)
                    if not 0 <= y < n_states:
                        problems.append(Violation("successor_out_of_range", x, u, f"successor={y}"))
                        continue
                    merged[y] = merged.get(y, 0.0) + float(p)
                succ = sorted(merged)
                probs = np.array([merged[y] for y in succ], dtype=float)
                total = probs.sum()
                # leave rounding-level sums alone so serialized models round-trip exactly
                if len(probs) and 1e-12 < abs(total - 1.0) <= PROB_TOL and np.all(probs >= 0):
                    probs = probs / total
                indices.extend(succ)
                data.extend(probs.tolist())
                indptr.append(len(indices))
                cost.append(float(c))
        if problems:
            raise InvalidModelError(problems)
        n_pairs = len(cost)
        P = sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64),
                           np.array(indptr, dtype=np.int64)), shape=(n_pairs, n_states))
        return cls(n_states, terminal, actions, P, np.array(cost, dtype=float))

    def row(self, x: int, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Successors and probabilities of ``p(. | x, u)``, sorted by successor."""
        k = self.pair(x, u)
        P = self.transition
        lo, hi = P.indptr[k], P.indptr[k + 1]
        return P.indices[lo:hi].copy(), P.data[lo:hi].copy()

    def policy_matrix(self, pi) -> sp.csr_matrix:
        """Closed-loop transition matrix ``P_pi`` of shape (n_states, n_states)."""
        return self.transition[self.policy_pairs(pi)]

    def to_dict(self) -> dict:
        P = self.transition
        transitions = []
        for k in range(self.n_pairs):
            x = int(self.pair_state[k])
            lo, hi = P.indptr[k], P.indptr[k + 1]
            transitions.append({
                "state": x,
                "action": int(k - self.action_ptr[x]),
                "row": [[int(y), float(p)] for y, p in zip(P.indices[lo:hi], P.data[lo:hi])],
                "cost": float(self.cost[k]),
            })
        return {
            "n_states": self.n_states,
            "terminal": self.terminal,
            "form": "kernel",
            "actions": [list(a) for a in self.actions],
            "transitions": transitions,
        }

    def digest(self) -> str:
        return model_digest(self)


@dataclass(frozen=True, eq=False)
class DisturbanceSsp(_PairLayout):
    """Finite SSP in generative form ``x' = F(x, u, w)``, ``w ~ q`` i.i.d.

    Parameters
    ----------
    n_states, terminal, actions, cost
        As in :class:`KernelSsp`.
    labels : tuple of str
        Disturbance labels.
    probs : ndarray, shape (n_disturbances,)
        Disturbance probabilities ``q(w)``.
    nominal : int
        Index of the nominal disturbance used by certainty-equivalent lookahead.
    successor : ndarray of int, shape (n_pairs, n_disturbances)
        ``successor[action_ptr[x] + u, w] = F(x, u, w)``.
    """

    n_states: int
    terminal: int
    actions: tuple
    cost: np.ndarray
    labels: tuple
    probs: np.ndarray
    nominal: int
    successor: np.ndarray
    action_ptr: np.ndarray = field(init=False, repr=False)
    pair_state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cost", _readonly(np.asarray(self.cost, dtype=float)))
        object.__setattr__(self, "labels", tuple(str(w) for w in self.labels))
        q = np.asarray(self.probs, dtype=float)
        total = q.sum()
        if len(q) and abs(total - 1.0) <= PROB_TOL and np.all(q >= 0):
            q = q / total
        object.__setattr__(self, "probs", _readonly(q))
        object.__setattr__(self, "successor", _readonly(np.asarray(self.successor, dtype=np.int64)))
        self._init_layout()
        if self.successor.shape != (self.n_pairs, len(self.labels)) or q.shape != (len(self.labels),):
            raise InvalidModelError([Violation(
                "shape", detail=f"successor {self.successor.shape}, probs {q.shape}, "
                                f"expected ({self.n_pairs}, {len(self.labels)})")])
        if self.cost.shape != (self.n_pairs,):
            raise InvalidModelError([Violation("shape", detail=f"cost shape {self.cost.shape}")])

    @classmethod
    def from_table(cls, n_states: int, terminal: int, actions, labels, probs, nominal: int,
                   successors, costs) -> "DisturbanceSsp":
        """Build from ``successors[x][u][w]`` and ``costs[x][u]``.

        Terminal entries may be omitted; they default to ``F(t, stop, w) = t``
        at zero cost.
        """
        actions = _normalize_actions(n_states, terminal, actions)
        n_w = len(labels)
        table, cost, problems = [], [], []
        for x in range(n_states):
            for u in range(len(actions[x])):
                try:
                    succ = [int(y) for y in successors[x][u]]
                    c = float(costs[x][u])
                except (IndexError, KeyError, TypeError):
                    if x == terminal:
                        succ, c = [terminal] * n_w, 0.0
                    else:
                        problems.append(Violation("missing_row", x, u))
                        succ, c = [terminal] * n_w, 0.0
                if len(succ) != n_w:
                    problems.append(Violation("successor_count", x, u, f"{len(succ)} != {n_w}"))
                    succ = (succ + [terminal] * n_w)[:n_w]
                table.append(succ)
                cost.append(c)
        if problems:
            raise InvalidModelError(problems)
        return cls(n_states, terminal, actions, np.array(cost, dtype=float), tuple(labels),
                   np.asarray(probs, dtype=float), int(nominal),
                   np.array(table, dtype=np.int64).reshape(len(cost), n_w))

    @property
    def n_disturbances(self) -> int:
        return len(self.labels)

    def nominal_successor(self) -> np.ndarray:
        """``F(x, u, w_bar)`` for every pair."""
        return self.successor[:, self.nominal]

    def to_dict(self) -> dict:
        successors = []
        for k in range(self.n_pairs):
            x = int(self.pair_state[k])
            successors.append({
                "state": x,
                "action": int(k - self.action_ptr[x]),
                "by_disturbance": [int(y) for y in self.successor[k]],
                "cost": float(self.cost[k]),
            })
        return {
            "n_states": self.n_states,
            "terminal": self.terminal,
            "form": "disturbance",
            "actions": [list(a) for a in self.actions],
            "disturbances": {
                "labels": list(self.labels),
                "probs": [float(p) for p in self.probs],
                "nominal": self.nominal,
            },
            "successors": successors,
        }

    def digest(self) -> str:
        return model_digest(self)


Model = Union[KernelSsp, DisturbanceSsp]


def model_digest(model: Model) -> str:
    """SHA-256 of the canonical JSON serialization."""
    text = json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def validate(model: Model) -> list[Violation]:
    """Return every invariant violation; an empty list means the model is valid."""
    out = model._layout_violations()
    if any(v.kind == "terminal_out_of_range" for v in out):
        return out
    t = model.terminal
    if isinstance(model, KernelSsp):
        P = model.transition
        sums = np.asarray(P.sum(axis=1)).ravel()
        for k in range(model.n_pairs):
            x = int(model.pair_state[k])
            u = int(k - model.action_ptr[x])
            data = P.data[P.indptr[k]:P.indptr[k + 1]]
            if np.any((data < 0) | (data > 1 + PROB_TOL)) or not np.all(np.isfinite(data)):
                out.append(Violation("probability_range", x, u, "probabilities must lie in [0, 1]"))
            if not abs(sums[k] - 1.0) <= PROB_TOL:
                out.append(Violation("row_sum", x, u, f"row sums to {sums[k]!r}"))
        if model.n_actions(t) >= 1:
            ys, ps = model.row(t, 0)
            if not (len(ys) == 1 and ys[0] == t and abs(ps[0] - 1.0) <= PROB_TOL):
                out.append(Violation("terminal_not_absorbing", t, 0, "terminal must self-loop with probability 1"))
    else:
        q = model.probs
        if len(q) == 0:
            out.append(Violation("disturbance_probs", detail="empty disturbance set"))
        elif np.any(q < 0) or not np.all(np.isfinite(q)):
            out.append(Violation("disturbance_probs", detail="negative or non-finite probability"))
        elif not abs(q.sum() - 1.0) <= PROB_TOL:
            out.append(Violation("disturbance_probs", detail=f"probabilities sum to {q.sum()!r}"))
        if not 0 <= model.nominal < len(q):
            out.append(Violation("nominal_out_of_range", detail=f"nominal={model.nominal}"))
        bad = (model.successor < 0) | (model.successor >= model.n_states)
        for k, w in zip(*np.nonzero(bad)):
            x = int(model.pair_state[k])
            out.append(Violation("successor_out_of_range", x, int(k - model.action_ptr[x]),
                                 f"F(., ., w={int(w)})={int(model.successor[k, w])}"))
        k_t = model.action_ptr[t]
        if model.n_actions(t) >= 1 and np.any(model.successor[k_t] != t):
            out.append(Violation("terminal_not_absorbing", t, 0, "F(t, ., w) must equal t for every w"))
    return out


def require_valid(model: Model) -> None:
    violations = validate(model)
    if violations:
        raise InvalidModelError(violations)


def induce_kernel(d: DisturbanceSsp) -> KernelSsp:
    """Push the disturbance distribution forward through ``F``.

    ``p(y | x, u) = sum of q(w) over w with F(x, u, w) = y``; disturbances that
    land on the same successor are merged into a single entry.
    """
    require_valid(d)
    n_w = d.n_disturbances
    rows = np.repeat(np.arange(d.n_pairs), n_w)
    cols = d.successor.ravel()
    vals = np.tile(d.probs, d.n_pairs)
    keep = vals > 0
    P = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(d.n_pairs, d.n_states))
    return KernelSsp(d.n_states, d.terminal, d.actions, P, d.cost)


def unit_cost(model: Model) -> Model:
    """Same dynamics with stage cost 1 at every nonterminal state and 0 at the terminal."""
    require_valid(model)
    cost = np.where(model.pair_state == model.terminal, 0.0, 1.0)
    if isinstance(model, KernelSsp):
        return KernelSsp(model.n_states, model.terminal, model.actions, model.transition, cost)
    return DisturbanceSsp(model.n_states, model.terminal, model.actions, cost, model.labels,
                          model.probs, model.nominal, model.successor)


def check_value(V, model: Model, name: str = "V") -> np.ndarray:
    """Validate a value function: right length, finite, zero at the terminal state."""
    V = np.asarray(V, dtype=float)
    if V.shape != (model.n_states,):
        raise ValueError(f"{name} has shape {V.shape}, expected ({model.n_states},)")
    if not np.all(np.isfinite(V)):
        raise ValueError(f"{name} has non-finite entries")
    if V[model.terminal] != 0:
        raise ValueError(f"{name}(t) = {V[model.terminal]!r}, must be 0")
    return V


def check_policy(pi, model: Model) -> np.ndarray:
    """Validate a stationary policy given as one action index per state."""
    pi = np.asarray(pi)
    if pi.shape != (model.n_states,) or not np.issubdtype(pi.dtype, np.integer):
        raise ValueError(f"policy must be an integer array of length {model.n_states}")
    counts = np.diff(model.action_ptr)
    bad = np.flatnonzero((pi < 0) | (pi >= counts))
    if len(bad):
        raise ValueError(f"policy action out of range at states {bad[:10].tolist()}")
    if pi[model.terminal] != 0:
        raise ValueError("policy must select the stop action (0) at the terminal state")
    return pi.astype(np.int64)


def policy_to_dict(pi, model: Model) -> dict:
    return {"actions": [int(a) for a in pi], "model_hash": model.digest()}
