"""Turn-aware Dijkstra and A* over (cell, incoming direction) states.

Edge costs mirror the reward magnitudes so that a cost-minimal path is a
return-maximal episode:

    0.5 per move
    + 5    if the elbow constraint is active and the move turns
    + 0.15 * min axis free distance of the entered cell, if install is active

Search runs on integer costs (everything scaled by ``COST_SCALE``), so
optimality comparisons are exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidPath, NoPath, ParseError
from .mdp import count_elbows, manhattan
from .scene import DIRECTIONS

STEP_COST = 0.5
ELBOW_COST = 5.0
INSTALL_COST = 0.15
COST_SCALE = 20
STEP_UNITS, ELBOW_UNITS, INSTALL_UNITS = 10, 100, 3

ALGORITHMS = ("dijkstra", "astar", "drl")


@dataclass(frozen=True)
class ConstraintSet:
    """Active design constraints: 1 length, 2 elbow, 3 installation distance."""

    flags: frozenset = frozenset({1})

    def __post_init__(self):
        flags = frozenset(int(f) for f in self.flags)
        if 1 not in flags or not flags <= {1, 2, 3}:
            raise ValueError(f"constraint set must contain 1 and only 1/2/3, got {sorted(flags)}")
        object.__setattr__(self, "flags", flags)

    @classmethod
    def parse(cls, text):
        """``"1,2"`` -> ConstraintSet({1, 2})."""
        try:
            flags = {int(t) for t in str(text).replace(" ", "").split(",") if t}
        except ValueError:
            raise ValueError(f"bad constraint list {text!r}") from None
        return cls(frozenset(flags))

    @property
    def elbow(self):
        return 2 in self.flags

    @property
    def install(self):
        return 3 in self.flags

    @property
    def label(self):
        return ",".join(str(f) for f in sorted(self.flags))

    def as_list(self):
        return sorted(self.flags)

    def unit_weights(self):
        return STEP_UNITS, ELBOW_UNITS if self.elbow else 0, INSTALL_UNITS if self.install else 0


TABLE_CONSTRAINTS = (ConstraintSet({1}), ConstraintSet({1, 2}), ConstraintSet({1, 2, 3}))


@dataclass
class Path:
    cells: list
    algorithm: str
    constraints: ConstraintSet
    cost: float
    expanded_nodes: int = 0
    self_intersecting: bool = field(default=False)

    def to_dict(self):
        return {
            "version": 1,
            "algorithm": self.algorithm,
            "constraints": self.constraints.as_list(),
            "cells": [list(c) for c in self.cells],
            "cost": self.cost,
            "expanded_nodes": int(self.expanded_nodes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"


def parse_path(data):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    for key in ("version", "algorithm", "constraints", "cells", "cost", "expanded_nodes"):
        if key not in obj:
            raise ParseError("missing required key", field=key)
    if obj["algorithm"] not in ALGORITHMS:
        raise ParseError(f"unknown algorithm {obj['algorithm']!r}", field="algorithm")
    try:
        cs = ConstraintSet(frozenset(obj["constraints"]))
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), field="constraints") from None
    cells = obj["cells"]
    if not isinstance(cells, list) or not all(
            isinstance(c, list) and len(c) == 3 and all(isinstance(v, int) for v in c) for c in cells):
        raise ParseError("expected a list of [x,y,z] integer triples", field="cells")
    cells = [tuple(c) for c in cells]
    return Path(cells, obj["algorithm"], cs, float(obj["cost"]), int(obj["expanded_nodes"]),
                len(set(cells)) != len(cells))


def load_path(path):
    with open(path, "rb") as fh:
        return parse_path(fh.read())


def edge_cost(scene, cs, in_dir, to_cell, move_dir):
    """Cost of entering ``to_cell`` along ``move_dir`` from a node reached via ``in_dir``.

    ``in_dir`` is ``None`` for the start node.
    """
    cost = STEP_COST
    if cs.elbow and in_dir is not None and in_dir != move_dir:
        cost += ELBOW_COST
    if cs.install:
        cost += INSTALL_COST * int(scene.min_distance[tuple(to_cell)])
    return cost


def heuristic(cell, goal):
    return STEP_COST * manhattan(cell, goal)


def path_cost_units(scene, cells, cs):
    """Integer-scaled cost of a cell path under ``cs``."""
    n_steps = len(cells) - 1
    units = STEP_UNITS * n_steps
    if cs.elbow:
        units += ELBOW_UNITS * count_elbows(cells)
    if cs.install:
        units += INSTALL_UNITS * sum(int(scene.min_distance[tuple(c)]) for c in cells[1:])
    return units


def path_cost(scene, cells, cs):
    return path_cost_units(scene, cells, cs) / COST_SCALE


def check_path(scene, cells):
    """Raise :class:`InvalidPath` unless ``cells`` is a collision-free 6-connected start->end chain."""
    if len(cells) < 2:
        raise InvalidPath("path needs at least two cells")
    if tuple(cells[0]) != scene.start or tuple(cells[-1]) != scene.end:
        raise InvalidPath("path must run from scene start to scene end")
    for i, c in enumerate(cells):
        c = tuple(c)
        if not scene.in_bounds(c) or scene.occupancy[c]:
            raise InvalidPath(f"cell {i} {c} collides with a wall or obstacle")
        if i and manhattan(c, cells[i - 1]) != 1:
            raise InvalidPath(f"cells {i - 1} and {i} are not axis neighbours")


def _plan(scene, cs, use_heuristic, label, backend=None):
    impl = backend or kernels.impl
    w_step, w_elbow, w_install = cs.unit_weights()
    cells, units, expanded = impl.search(scene.occupancy, scene.min_distance, scene.start, scene.end,
                                         w_step, w_elbow, w_install, use_heuristic)
    if cells is None:
        raise NoPath(f"end {scene.end} unreachable from start {scene.start}")
    cells = [tuple(int(v) for v in c) for c in cells]
    return Path(cells, label, cs, units / COST_SCALE, expanded, len(set(cells)) != len(cells))


def plan_dijkstra(scene, cs, backend=None):
    """Minimum-cost path; ties broken by (cost, cell index, direction index)."""
    return _plan(scene, cs, False, "dijkstra", backend)


def plan_astar(scene, cs, backend=None):
    """A* with heuristic ``0.5 * manhattan``; same optimal cost as Dijkstra.

    Ties on f are broken towards smaller heuristic (deeper nodes), then cell
    index and direction index.
    """
    return _plan(scene, cs, True, "astar", backend)


def moves_of(cells):
    """Action indices of consecutive moves."""
    out = []
    for a, b in zip(cells[:-1], cells[1:]):
        out.append(DIRECTIONS.index(tuple(int(q) - int(p) for p, q in zip(a, b))))
    return out


def cells_array(cells):
    return np.asarray(cells, dtype=np.int32).reshape(-1, 3)
