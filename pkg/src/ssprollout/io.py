"""JSON model, vector, and scenario files."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from .errors import InvalidModelError
from .model import DisturbanceSsp, KernelSsp, Violation
from . import scenarios


class Instance(NamedTuple):
    model: Any
    start: int
    V: np.ndarray | None  # built-in surrogate, if the scenario defines one
    label: str


def read_json(path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_json(obj, path=None, stream=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    elif stream is not None:
        stream.write(text)
    return text


def _require(d, key):
    if key not in d:
        raise InvalidModelError([Violation("missing_field", detail=key)])
    return d[key]


def model_from_dict(d: dict):
    """Parse the structured model format (``form`` is ``"kernel"`` or ``"disturbance"``)."""
    n = int(_require(d, "n_states"))
    t = int(_require(d, "terminal"))
    actions = _require(d, "actions")
    if len(actions) != n:
        raise InvalidModelError([Violation("shape", detail=f"{len(actions)} action lists for {n} states")])
    form = d.get("form", "kernel")
    if not 0 <= t < n:
        raise InvalidModelError([Violation("terminal_out_of_range", detail=f"terminal={t}")])
    rows = [[None] * len(a) for a in actions]
    costs = [[None] * len(a) for a in actions]
    entries = _require(d, "transitions" if form == "kernel" else "successors")
    problems = []
    for e in entries:
        x, u = int(e["state"]), int(e["action"])
        if not (0 <= x < n and 0 <= u < len(actions[x])):
            problems.append(Violation("action_out_of_range", x, u))
            continue
        rows[x][u] = e["row"] if form == "kernel" else e["by_disturbance"]
        costs[x][u] = float(e["cost"])
    for x in range(n):
        for u in range(len(actions[x])):
            if rows[x][u] is None:
                if x == t:
                    rows[x], costs[x] = [], []
                else:
                    problems.append(Violation("missing_row", x, u))
    if problems:
        raise InvalidModelError(problems)
    if form == "kernel":
        return KernelSsp.from_rows(n, t, actions, rows, costs)
    if form == "disturbance":
        dist = _require(d, "disturbances")
        return DisturbanceSsp.from_table(n, t, actions, dist["labels"], dist["probs"],
                                         int(dist.get("nominal", 0)), rows, costs)
    raise InvalidModelError([Violation("form", detail=f"unknown form {form!r}")])


def scenario_from_dict(spec: dict) -> Instance:
    """Build a scenario from ``{"kind": ..., <parameters>}``."""
    kind = spec.get("kind")
    if kind == "sharpness":
        s = scenarios.sharpness_chain(int(spec.get("M", 4)), float(spec.get("eps", 0.1)))
        return Instance(s.model, s.start, s.V, f"sharpness(M={s.model.n_states - 2})")
    if kind == "gridworld":
        fields = {k: v for k, v in spec.items() if k != "kind"}
        for k in ("robot_start", "target", "obstacle_start"):
            if k in fields:
                fields[k] = tuple(fields[k])
        g = scenarios.gridworld_nav(scenarios.GridworldSpec(**fields))
        return Instance(g.model, g.start, scenarios.frozen_obstacle_value(g.spec), "gridworld")
    if kind == "random":
        seed = int(spec.get("seed", 0))
        n, a = int(spec.get("n_states", 8)), int(spec.get("n_actions", 3))
        n_w = int(spec.get("n_disturbances", 0))
        if n_w > 0:
            m = scenarios.random_disturbance_ssp(n, a, n_w, seed=seed)
        else:
            m = scenarios.random_proper_ssp(n, a, float(spec.get("density", 0.5)), seed=seed)
        return Instance(m, int(spec.get("start", 0)), None, f"random(seed={seed})")
    if kind == "corridor":
        length = int(spec.get("length", 20))
        return Instance(scenarios.corridor(length), 0, None, f"corridor({length})")
    raise ValueError(f"unknown scenario kind {kind!r}")


def load_instance(path) -> Instance:
    d = read_json(path)
    if "scenario" in d:
        return scenario_from_dict(d["scenario"])
    return Instance(model_from_dict(d), int(d.get("start", 0)), None, str(path))


def read_vector(path) -> np.ndarray:
    d = read_json(path)
    if isinstance(d, dict):
        d = d["values"]
    return np.asarray(d, dtype=float)
