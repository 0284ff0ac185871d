"""Path metrics and the three-way planner / DRL comparison harness.

All metrics are in cells (one cell is 10 cm).
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .errors import ConfigError, InvalidPath, NoPath
from .mdp import PipeEnv, RewardWeights, Terminal, count_elbows
from .observe import BLOCKS, layout_hash
from .planner import (TABLE_CONSTRAINTS, ConstraintSet, Path, check_path, path_cost, plan_astar,
                      plan_dijkstra)
from .policy import act, load_checkpoint
from .scene import SceneConfig, derive_seed, generate_scene, serialize_scene

REPORT_FIELDS = ("algo", "constraints", "n", "success_rate", "mean_length", "mean_elbows",
                 "mean_install", "mean_time_s", "p95_time_s", "mean_expanded_nodes")


@dataclass
class Metrics:
    length_cells: int
    elbows: int
    install_distance_cells: float
    layout_time_s: float = 0.0
    success: bool = True


def path_metrics(scene, cells, layout_time_s=0.0):
    """Length, elbows and mean install distance (start cell excluded) of a valid path."""
    cells = [tuple(int(v) for v in c) for c in cells]
    check_path(scene, cells)
    if len(set(cells)) != len(cells):
        raise InvalidPath("path visits a cell twice")
    install = float(np.mean([int(scene.min_distance[c]) for c in cells[1:]]))
    return Metrics(len(cells) - 1, count_elbows(cells), install, layout_time_s, True)


# --------------------------------------------------------------------------
# DRL layout
# --------------------------------------------------------------------------

def mask_for_layout(layout):
    """Recover the zero-filled feature blocks from a checkpoint's layout hash."""
    names = [n for n, _ in BLOCKS]
    for k in range(len(names) + 1):
        for subset in combinations(names, k):
            if layout_hash(subset) == layout:
                return subset
    raise ConfigError(f"checkpoint layout {layout:#018x} matches no known observation layout")


def drl_layout(scene, net, cs, feature_mask=None):
    """Greedy rollout of ``net`` on ``scene``; returns a Path or None on failure."""
    if feature_mask is None:
        feature_mask = mask_for_layout(net.obs_layout)
    env = PipeEnv(scene, RewardWeights.for_constraints(cs.flags), feature_mask)
    obs = env.observe()
    terminal = Terminal.RUNNING
    while terminal is Terminal.RUNNING:
        action, _, _ = act(net, obs, env.action_mask(), mode="greedy")
        out = env.step(action)
        obs, terminal = out.observation, out.terminal
    if terminal is not Terminal.SUCCESS:
        return None
    cells = list(env.state.path)
    return Path(cells, "drl", cs, path_cost(scene, cells, cs), 0, False)


# --------------------------------------------------------------------------
# Benchmark
# --------------------------------------------------------------------------

@dataclass
class Row:
    algo: str
    constraints: ConstraintSet
    seeds: list
    metrics: list = field(default_factory=list)   # one per scene; None on failure
    costs: list = field(default_factory=list)
    expanded: list = field(default_factory=list)
    times: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.seeds)

    @property
    def failures(self):
        return sum(m is None for m in self.metrics)

    def summary(self):
        ok = [m for m in self.metrics if m is not None]
        nan = float("nan")
        times = np.asarray(self.times)
        return {
            "algo": self.algo,
            "constraints": self.constraints.label,
            "n": self.n,
            "success_rate": len(ok) / self.n if self.n else nan,
            "mean_length": float(np.mean([m.length_cells for m in ok])) if ok else nan,
            "mean_elbows": float(np.mean([m.elbows for m in ok])) if ok else nan,
            "mean_install": float(np.mean([m.install_distance_cells for m in ok])) if ok else nan,
            "mean_time_s": float(times.mean()) if len(times) else nan,
            "p95_time_s": float(np.percentile(times, 95)) if len(times) else nan,
            "mean_expanded_nodes": float(np.mean(self.expanded)) if self.expanded else nan,
        }


@dataclass
class Report:
    rows: list
    seeds: list
    scene_config: SceneConfig

    def row(self, algo, constraints):
        cs = constraints if isinstance(constraints, ConstraintSet) else ConstraintSet.parse(constraints)
        for r in self.rows:
            if r.algo == algo and r.constraints == cs:
                return r
        raise KeyError((algo, cs.label))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, REPORT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            s = r.summary()
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in s.items()})
        return buf.getvalue()

    def to_table(self):
        header = ("algo", "cs", "n", "success", "length", "elbows", "install", "time_s", "p95_s", "expanded")
        lines = [header]
        for r in self.rows:
            s = r.summary()
            lines.append((s["algo"], "{" + s["constraints"] + "}", str(s["n"]), f"{s['success_rate']:.3f}",
                          f"{s['mean_length']:.2f}", f"{s['mean_elbows']:.2f}", f"{s['mean_install']:.2f}",
                          f"{s['mean_time_s']:.5f}", f"{s['p95_time_s']:.5f}",
                          "-" if np.isnan(s["mean_expanded_nodes"]) else f"{s['mean_expanded_nodes']:.0f}"))
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        out = ["metrics in cells (1 cell = 0.1 m)"]
        for line in lines:
            out.append("  ".join(v.rjust(w) for v, w in zip(line, widths)))
        return "\n".join(out) + "\n"


def _fmt(v):
    if np.isnan(v):
        return ""
    return repr(float(v))


def _constraint_sets(values):
    out = []
    for v in values:
        out.append(v if isinstance(v, ConstraintSet) else ConstraintSet.parse(v))
    return out


def run_benchmark(n_scenes=100, seed=0, algorithms=("dijkstra", "astar"), constraint_sets=TABLE_CONSTRAINTS,
                  checkpoints=None, scene_config=None, progress=None):
    """Lay out ``n_scenes`` seeded scenes with every (algorithm, constraint set) pair.

    ``checkpoints`` maps a constraint set (or its label) to a checkpoint path
    or a loaded network and is required for ``"drl"``. Timing wraps only the
    layout call, which starts from a scene with no cached derived fields.
    """
    constraint_sets = _constraint_sets(constraint_sets)
    algorithms = list(algorithms)
    for algo in algorithms:
        if algo not in ("dijkstra", "astar", "drl"):
            raise ConfigError(f"unknown algorithm {algo!r}")
    scene_config = scene_config or SceneConfig()
    nets = {}
    if "drl" in algorithms:
        checkpoints = {(k.label if isinstance(k, ConstraintSet) else ConstraintSet.parse(k).label): v
                       for k, v in (checkpoints or {}).items()}
        for cs in constraint_sets:
            src = checkpoints.get(cs.label)
            if src is None:
                raise ConfigError(f"no DRL checkpoint for constraint set {{{cs.label}}}")
            if isinstance(src, (str, os.PathLike)):
                if not os.path.exists(src):
                    raise ConfigError(f"checkpoint not found: {src}")
                src = load_checkpoint(src, expected_layout=None)
            nets[cs.label] = (src, mask_for_layout(src.obs_layout))

    seeds = [derive_seed(seed, i) for i in range(n_scenes)]
    rows = [Row(a, cs, seeds) for a in algorithms for cs in constraint_sets]
    for i, s in enumerate(seeds):
        base = generate_scene(s, scene_config)
        for row in rows:
            scene = replace(base)
            t0 = time.perf_counter()
            try:
                if row.algo == "dijkstra":
                    path = plan_dijkstra(scene, row.constraints)
                elif row.algo == "astar":
                    path = plan_astar(scene, row.constraints)
                else:
                    net, mask = nets[row.constraints.label]
                    path = drl_layout(scene, net, row.constraints, mask)
            except NoPath:
                path = None
            elapsed = time.perf_counter() - t0
            row.times.append(elapsed)
            if path is None:
                row.metrics.append(None)
                continue
            row.metrics.append(path_metrics(base, path.cells, elapsed))
            row.costs.append(path.cost)
            if row.algo != "drl":
                row.expanded.append(path.expanded_nodes)
        if progress is not None:
            progress(i + 1, n_scenes)
    return Report(rows, seeds, scene_config)


def scene_stream(n_scenes, seed, scene_config=None):
    """Serialized scenes of a benchmark run, in order."""
    cfg = scene_config or SceneConfig()
    return [serialize_scene(generate_scene(derive_seed(seed, i), cfg)) for i in range(n_scenes)]
