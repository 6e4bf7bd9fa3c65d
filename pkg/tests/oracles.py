"""Independent reference computations used to freeze expected values.

These deliberately avoid the package's solver: models are read back through
their serialized dict form and handled as dense numpy arrays, values come from
policy enumeration, and cost/occupation sums from truncated Neumann series.
"""
import itertools

import numpy as np


def dense(model):
    """(P[x][u] dense rows, c[x][u]) lists from the serialized model."""
    d = model.to_dict()
    n = d["n_states"]
    P = [[None] * len(a) for a in d["actions"]]
    c = [[None] * len(a) for a in d["actions"]]
    for e in d["transitions"]:
        row = np.zeros(n)
        for y, p in e["row"]:
            row[y] += p
        P[e["state"]][e["action"]] = row
        c[e["state"]][e["action"]] = e["cost"]
    return P, c, d["terminal"]


def closed_loop(model, pi):
    P, c, t = dense(model)
    n = len(P)
    Q = np.array([P[x][pi[x]] for x in range(n)])
    f = np.array([c[x][pi[x]] for x in range(n)])
    Q[t] = 0.0
    Q[:, t] = 0.0
    f[t] = 0.0
    return Q, f, t


def neumann_sum(Q, f, terms=20000):
    """sum_k Q^k f by repeated multiplication (no linear solve)."""
    out = np.zeros_like(f)
    term = f.copy()
    for _ in range(terms):
        out += term
        term = Q @ term
        if np.max(np.abs(term)) < 1e-15:
            break
    return out


def occupation_series(Q, start, terms=20000):
    n = Q.shape[0]
    row = np.zeros(n)
    row[start] = 1.0
    out = np.zeros(n)
    for _ in range(terms):
        out += row
        row = row @ Q
        if row.sum() < 1e-15:
            break
    return out


def evaluate_dense(model, pi):
    """Exact J^pi by a dense solve on transient states, inf where improper."""
    Q, f, t = closed_loop(model, pi)
    n = Q.shape[0]
    # absorption probability via iteration
    reach = np.zeros(n)
    reach[t] = 1.0
    Pfull = Q.copy()
    P, _, _ = dense(model)
    for x in range(n):
        Pfull[x] = P[x][pi[x]]
    for _ in range(5000):
        reach = Pfull @ reach
        reach[t] = 1.0
    J = np.full(n, np.inf)
    ok = reach > 1 - 1e-9
    idx = np.flatnonzero(ok)
    A = np.eye(len(idx)) - Q[np.ix_(idx, idx)]
    J[idx] = np.linalg.solve(A, f[idx])
    return J


def brute_force_vstar(model):
    """min over all deterministic stationary policies of the exact cost."""
    P, _, t = dense(model)
    choices = [range(len(P[x])) for x in range(len(P))]
    best = np.full(len(P), np.inf)
    for pi in itertools.product(*choices):
        J = evaluate_dense(model, np.array(pi))
        best = np.minimum(best, J)
    return best
