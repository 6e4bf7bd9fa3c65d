"""Benchmark SSP instances.

* :func:`sharpness_chain` - deterministic chain on which the rollout loss is a
  constant fraction of ``eps * E[tau]`` for every length.
* :func:`gridworld_nav` - robot navigation to a target with one randomly moving
  obstacle, in disturbance form.
* :func:`random_proper_ssp`, :func:`random_disturbance_ssp` - seeded random
  instances for property sweeps.
* small fixtures: :func:`corridor`, :func:`countdown_chain`, :func:`geometric`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .exact_solver import proper_states, value_iteration
from .model import STOP, DisturbanceSsp, KernelSsp, induce_kernel

MOVES_4 = {"stay": (0, 0), "up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
MOVES_8 = {**MOVES_4, "up-left": (-1, -1), "up-right": (-1, 1),
           "down-left": (1, -1), "down-right": (1, 1)}


class SharpnessChain(NamedTuple):
    model: KernelSsp
    V: np.ndarray
    start: int
    expected_gap: float
    expected_tau: int
    expected_vstar: np.ndarray


def sharpness_chain(M: int, eps: float) -> SharpnessChain:
    """Chain ``0 -> 1 -> ... -> M`` where stopping is optimal but ``V = -eps``
    lures the rollout policy into continuing.

    States ``0..M`` are nonterminal and ``t = M + 1``. At ``i < M`` the actions
    are ``s`` (to ``t``, cost 0) and ``c`` (to ``i + 1``, cost ``eps / 2``);
    state ``M`` only stops. ``V(i) = -eps`` for ``i <= M`` and ``V(t) = 0``.
    """
    if int(M) != M or M < 1:
        raise ValueError("M must be an integer >= 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    M = int(M)
    t = M + 1
    actions = [["s", "c"] for _ in range(M)] + [["s"], [STOP]]
    rows = [[[(t, 1.0)], [(i + 1, 1.0)]] for i in range(M)] + [[[(t, 1.0)]]]
    costs = [[0.0, eps / 2] for _ in range(M)] + [[0.0]]
    model = KernelSsp.from_rows(M + 2, t, actions, rows, costs)
    V = np.full(M + 2, -float(eps))
    V[t] = 0.0
    return SharpnessChain(model, V, 0, M * eps / 2, M + 1, np.zeros(M + 2))


def corridor(length: int) -> KernelSsp:
    """Unit-cost corridor: cells ``0..length-1``, terminal ``length``.

    Each cell may move ``left`` (clamped at cell 0) or ``right``; moving right
    from the last cell arrives. The minimum hitting time from cell ``i`` is
    ``length - i``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    t = length
    actions = [["left", "right"] for _ in range(length)] + [[STOP]]
    rows = [[[(max(i - 1, 0), 1.0)], [(i + 1, 1.0)]] for i in range(length)]
    costs = [[1.0, 1.0] for _ in range(length)]
    return KernelSsp.from_rows(length + 1, t, actions, rows, costs)


def countdown_chain(n: int) -> KernelSsp:
    """Deterministic chain ``i -> i - 1`` on ``1..n`` with terminal state ``0``."""
    actions = [[STOP]] + [["down"] for _ in range(n)]
    rows = [[[(0, 1.0)]]] + [[[(i - 1, 1.0)]] for i in range(1, n + 1)]
    costs = [[0.0]] + [[1.0] for _ in range(n)]
    return KernelSsp.from_rows(n + 1, 0, actions, rows, costs)


def geometric(p: float = 0.5) -> KernelSsp:
    """Single transient state 0 that self-loops w.p. ``1 - p`` and exits w.p. ``p``."""
    return KernelSsp.from_rows(2, 1, [["go"], [STOP]], [[[(0, 1 - p), (1, p)]]], [[1.0]])


@dataclass(frozen=True)
class GridworldSpec:
    """Robot-navigation SSP with one moving obstacle.

    Cells are ``(row, col)``. ``obstacle_moves`` maps move labels (keys of
    ``MOVES_8``) to probabilities. Arrival is tested after the robot move using
    Manhattan distance (4-connected) or Chebyshev distance (8-connected).
    """

    width: int = 5
    height: int = 5
    robot_start: tuple = (0, 0)
    target: tuple = (4, 4)
    arrival_radius: int = 0
    obstacle_start: tuple = (2, 2)
    obstacle_moves: dict = field(default_factory=lambda: {m: 0.2 for m in MOVES_4})
    collision_penalty: float = 0.0
    nominal_move: str = "stay"
    connectivity: int = 4

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        for name in ("robot_start", "target", "obstacle_start"):
            r, c = getattr(self, name)
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(f"{name} {(r, c)} outside the grid")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        unknown = set(self.obstacle_moves) - set(MOVES_8)
        if unknown:
            raise ValueError(f"unknown obstacle moves {sorted(unknown)}")
        if abs(sum(self.obstacle_moves.values()) - 1.0) > 1e-9:
            raise ValueError("obstacle move probabilities must sum to 1")
        if any(p < 0 for p in self.obstacle_moves.values()):
            raise ValueError("obstacle move probabilities must be nonnegative")
        if self.nominal_move not in self.obstacle_moves:
            raise ValueError("nominal move must be one of the obstacle moves")
        if self.collision_penalty < 0 or self.arrival_radius < 0:
            raise ValueError("penalty and arrival radius must be nonnegative")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def cell(self, rc) -> int:
        return rc[0] * self.width + rc[1]

    def encode(self, robot, obstacle) -> int:
        """Joint state index of robot cell ``robot`` and obstacle cell ``obstacle``."""
        return self.cell(robot) * self.n_cells + self.cell(obstacle)

    def decode(self, state: int):
        r, o = divmod(state, self.n_cells)
        return divmod(r, self.width), divmod(o, self.width)

    def arrived(self, rc) -> bool:
        dr, dc = abs(rc[0] - self.target[0]), abs(rc[1] - self.target[1])
        dist = dr + dc if self.connectivity == 4 else max(dr, dc)
        return dist <= self.arrival_radius

    def inside(self, rc) -> bool:
        return 0 <= rc[0] < self.height and 0 <= rc[1] < self.width


class GridworldInstance(NamedTuple):
    model: DisturbanceSsp
    start: int
    spec: GridworldSpec


def gridworld_nav(spec: GridworldSpec) -> GridworldInstance:
    """Build the joint robot/obstacle SSP.

    Robot moves leaving the grid are not admissible. Obstacle moves leaving
    the grid become ``stay``. Stage cost is 1 plus ``collision_penalty`` when
    robot and obstacle share a cell in the current state.
    """
    moves = MOVES_4 if spec.connectivity == 4 else MOVES_8
    labels = list(spec.obstacle_moves)
    probs = [spec.obstacle_moves[w] for w in labels]
    n = spec.n_cells
    t = n * n
    cells = [divmod(i, spec.width) for i in range(n)]
    actions, successors, costs = [], [], []
    for state in range(t):
        robot, obstacle = cells[state // n], cells[state % n]
        stage = 1.0 + (spec.collision_penalty if robot == obstacle else 0.0)
        acts, succ, cost = [], [], []
        obstacle_next = []
        for w in labels:
            dr, dc = MOVES_8[w]
            o = (obstacle[0] + dr, obstacle[1] + dc)
            obstacle_next.append(o if spec.inside(o) else obstacle)
        for name, (dr, dc) in moves.items():
            r = (robot[0] + dr, robot[1] + dc)
            if not spec.inside(r):
                continue
            acts.append(name)
            cost.append(stage)
            if spec.arrived(r):
                succ.append([t] * len(labels))
            else:
                succ.append([spec.encode(r, o) for o in obstacle_next])
        actions.append(acts)
        successors.append(succ)
        costs.append(cost)
    actions.append([STOP])
    model = DisturbanceSsp.from_table(t + 1, t, actions, labels, probs,
                                      labels.index(spec.nominal_move), successors, costs)
    return GridworldInstance(model, spec.encode(spec.robot_start, spec.obstacle_start), spec)


def frozen_obstacle_value(spec: GridworldSpec) -> np.ndarray:
    """Surrogate value: the exact optimal value of the same grid with a static obstacle."""
    frozen = replace(spec, obstacle_moves={"stay": 1.0}, nominal_move="stay")
    return value_iteration(induce_kernel(gridworld_nav(frozen).model)).value


def random_proper_ssp(n_states: int, n_actions: int, density: float = 0.5,
                      cost_range: tuple = (0.1, 1.0), seed: int = 0) -> KernelSsp:
    """Random kernel-form SSP in which every state has a proper exit.

    State ``n_states - 1`` is terminal. Every nonterminal state gets
    ``n_actions`` actions with random sparse rows; one of them (chosen at
    random) additionally routes a mass in ``[0.05, 0.5]`` directly to the
    terminal, so a proper policy always exists.
    """
    if n_states < 2:
        raise ValueError("need at least one nonterminal state")
    rng = np.random.default_rng(seed)
    t = n_states - 1
    lo, hi = cost_range
    actions, rows, costs = [], [], []
    for x in range(t):
        safe = rng.integers(n_actions)
        acts, rws, cs = [], [], []
        for u in range(n_actions):
            mask = rng.random(n_states) < density
            if not mask.any():
                mask[rng.integers(n_states)] = True
            succ = np.flatnonzero(mask)
            p = rng.dirichlet(np.ones(len(succ)))
            row = dict(zip(succ.tolist(), p.tolist()))
            if u == safe:
                m = rng.uniform(0.05, 0.5)
                row = {y: (1 - m) * v for y, v in row.items()}
                row[t] = row.get(t, 0.0) + m
            acts.append(f"a{u}")
            rws.append(row)
            cs.append(float(rng.uniform(lo, hi)))
        actions.append(acts)
        rows.append(rws)
        costs.append(cs)
    actions.append([STOP])
    return KernelSsp.from_rows(n_states, t, actions, rows, costs)


def random_disturbance_ssp(n_states: int, n_actions: int, n_disturbances: int,
                           cost_range: tuple = (0.1, 1.0), seed: int = 0) -> DisturbanceSsp:
    """Random disturbance-form SSP; every state has an action that can reach the terminal.

    Disturbance probabilities are bounded below by ``0.2 / n_disturbances`` and
    the nominal disturbance is the most likely one.
    """
    if n_states < 2:
        raise ValueError("need at least one nonterminal state")
    rng = np.random.default_rng(seed)
    t = n_states - 1
    q = 0.8 * rng.dirichlet(np.ones(n_disturbances)) + 0.2 / n_disturbances
    lo, hi = cost_range
    actions, successors, costs = [], [], []
    for x in range(t):
        safe = rng.integers(n_actions)
        succ = rng.integers(0, n_states, size=(n_actions, n_disturbances))
        succ[safe, rng.integers(n_disturbances)] = t
        actions.append([f"a{u}" for u in range(n_actions)])
        successors.append(succ.tolist())
        costs.append(rng.uniform(lo, hi, size=n_actions).tolist())
    actions.append([STOP])
    return DisturbanceSsp.from_table(n_states, t, actions, [f"w{i}" for i in range(n_disturbances)],
                                     q / q.sum(), int(np.argmax(q)), successors, costs)


def random_proper_policy(model: KernelSsp, seed: int = 0) -> np.ndarray:
    """Uniformly random policy, repaired at improper states.

    At each state from which the random policy is improper, the action with
    the largest one-step probability of reaching the terminal is used instead.
    States that were proper keep their actions and their successors stay
    proper, so the result is proper wherever every state has some action with
    a direct terminal mass (as in :func:`random_proper_ssp`).
    """
    rng = np.random.default_rng(seed)
    counts = np.diff(model.action_ptr)
    pi = (rng.random(model.n_states) * counts).astype(np.int64)
    pi[model.terminal] = 0
    bad = ~proper_states(model, pi)
    if bad.any():
        to_t = np.asarray(model.transition[:, model.terminal].todense()).ravel()
        for x in np.flatnonzero(bad):
            lo, hi = model.action_ptr[x], model.action_ptr[x + 1]
            pi[x] = int(np.argmax(to_t[lo:hi]))
    if not proper_states(model, pi).all():
        raise ValueError("could not repair the random policy into a proper one")
    return pi


def noisy_value(vstar, amplitude: float, terminal: int, seed: int = 0) -> np.ndarray:
    """``V* + U[-amplitude, amplitude]`` per state, forced to 0 at the terminal."""
    rng = np.random.default_rng(seed)
    V = np.asarray(vstar, dtype=float) + rng.uniform(-amplitude, amplitude, size=len(vstar))
    V[terminal] = 0.0
    return V
