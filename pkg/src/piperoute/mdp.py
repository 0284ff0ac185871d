"""Episodic pipe-laying environment with masked axis moves and shaped rewards."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IllegalAction, NotSuccessful
from .observe import OBS_DIM, observe
from .scene import DIRECTIONS, Scene, SceneConfig, generate_scene


@dataclass(frozen=True)
class RewardWeights:
    r_success: float = 100.0
    r_closer: float = 1.0
    r_further: float = -1.0
    r_base: float = -0.5
    r_elbow: float = -5.0
    w_install: float = 0.15

    def __post_init__(self):
        if not self.r_success > 0:
            raise ValueError("r_success must be positive")
        if self.w_install < 0:
            raise ValueError("w_install must be non-negative")

    @classmethod
    def for_constraints(cls, constraints, **overrides):
        """Weights for a constraint set: elbow / install terms are dropped when absent."""
        w = cls(**overrides)
        cs = set(constraints)
        if 2 not in cs:
            w = replace(w, r_elbow=0.0)
        if 3 not in cs:
            w = replace(w, w_install=0.0)
        return w


class Terminal(str, enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    TRAPPED = "trapped"
    TRUNCATED = "truncated"


@dataclass
class AgentState:
    cur: tuple
    prev_dir: int | None = None
    visited: set = field(default_factory=set)
    path: list = field(default_factory=list)
    steps: int = 0
    elbows: int = 0
    install_sum: int = 0


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    terminal: Terminal
    reward_breakdown: dict


def manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) + abs(a[2] - b[2])


def count_elbows(cells):
    """Direction changes between consecutive moves of a cell sequence."""
    moves = np.diff(np.asarray(cells, dtype=np.int64), axis=0)
    if len(moves) < 2:
        return 0
    return int(np.any(moves[1:] != moves[:-1], axis=1).sum())


def default_max_steps(scene):
    return 4 * sum(scene.dims)


class PipeEnv:
    """Single pipe, one cell per step, six axis actions.

    ``reset`` accepts a :class:`Scene` or an integer seed (a fresh scene is
    drawn from ``scene_config``). Moves into walls, obstacles or the pipe's own
    cells are masked; requesting one raises :class:`IllegalAction`.
    """

    def __init__(self, scene=None, weights=None, feature_mask=(), scene_config=None, max_steps=None):
        self.weights = weights or RewardWeights()
        self.feature_mask = tuple(sorted(feature_mask))
        self.scene_config = scene_config or SceneConfig()
        self._max_steps = max_steps
        self.scene = None
        self.state = None
        self.terminal = Terminal.RUNNING
        if scene is not None:
            self.reset(scene)

    @property
    def max_steps(self):
        return self._max_steps if self._max_steps is not None else default_max_steps(self.scene)

    def reset(self, scene_or_seed):
        if isinstance(scene_or_seed, Scene):
            self.scene = scene_or_seed
        else:
            self.scene = generate_scene(scene_or_seed, self.scene_config)
        scene = self.scene
        lx, ly, lz = scene.dims
        self._strides = (ly * lz, lz, 1)
        # 0 free, 1 obstacle, 2 pipe
        self._grid = bytearray(np.ascontiguousarray(scene.occupancy).tobytes())
        start = scene.start
        self._grid[self._index(start)] = 2
        self.state = AgentState(cur=start, visited={start}, path=[start])
        self.terminal = Terminal.RUNNING
        return self.observe()

    def _index(self, c):
        sx, sy, _ = self._strides
        return c[0] * sx + c[1] * sy + c[2]

    def observe(self, out=None):
        return observe(self.scene, self.state.cur, self.state.prev_dir, self.feature_mask, out=out)

    def action_mask(self):
        return np.array(self._mask_list(self.state.cur), dtype=bool)

    def _mask_list(self, cur):
        dims = self.scene.dims
        grid = self._grid
        out = []
        for d in DIRECTIONS:
            n = (cur[0] + d[0], cur[1] + d[1], cur[2] + d[2])
            ok = 0 <= n[0] < dims[0] and 0 <= n[1] < dims[1] and 0 <= n[2] < dims[2]
            out.append(ok and grid[self._index(n)] == 0)
        return out

    def step(self, action):
        if self.terminal is not Terminal.RUNNING:
            raise IllegalAction(f"episode already ended ({self.terminal.value})")
        action = int(action)
        if not 0 <= action < 6 or not self._mask_list(self.state.cur)[action]:
            raise IllegalAction(f"action {action} is masked at {self.state.cur}")
        w = self.weights
        st = self.state
        end = self.scene.end
        d = DIRECTIONS[action]
        old = st.cur
        new = (old[0] + d[0], old[1] + d[1], old[2] + d[2])
        turned = st.prev_dir is not None and st.prev_dir != action
        install = int(self.scene.min_distance[new])
        reached = new == end
        breakdown = {
            "base": w.r_base,
            "progress": w.r_closer if manhattan(new, end) < manhattan(old, end) else w.r_further,
            "elbow": w.r_elbow if turned else 0.0,
            "install": -w.w_install * install,
            "success": w.r_success if reached else 0.0,
        }
        reward = sum(breakdown.values())

        st.cur = new
        st.prev_dir = action
        st.visited.add(new)
        st.path.append(new)
        st.steps += 1
        st.elbows += int(turned)
        st.install_sum += install
        self._grid[self._index(new)] = 2

        if reached:
            self.terminal = Terminal.SUCCESS
        elif not any(self._mask_list(new)):
            self.terminal = Terminal.TRAPPED
        elif st.steps >= self.max_steps:
            self.terminal = Terminal.TRUNCATED
        return StepOutcome(self.observe(), reward, self.terminal, breakdown)


def episode_return_identity(scene, cells, weights=None):
    """Closed-form return of a successful episode that laid ``cells``.

    Closer/further terms telescope because every axis move changes the
    Manhattan distance to the end by exactly one.
    """
    w = weights or RewardWeights()
    cells = [tuple(int(v) for v in c) for c in cells]
    if not cells or cells[0] != scene.start or cells[-1] != scene.end:
        raise NotSuccessful("trajectory does not run from start to end")
    n_steps = len(cells) - 1
    m = manhattan(scene.start, scene.end)
    closer = (n_steps + m) // 2
    further = (n_steps - m) // 2
    install = sum(int(scene.min_distance[c]) for c in cells[1:])
    return (w.r_success + w.r_closer * closer + w.r_further * further + w.r_base * n_steps
            + w.r_elbow * count_elbows(cells) - w.w_install * install)


def replay(env, scene, cells):
    """Step ``env`` through the moves of a cell path; returns the outcomes."""
    env.reset(scene)
    outcomes = []
    for a, b in zip(cells[:-1], cells[1:]):
        delta = tuple(int(q) - int(p) for p, q in zip(a, b))
        outcomes.append(env.step(DIRECTIONS.index(delta)))
    return outcomes


__all__ = [
    "AgentState", "OBS_DIM", "PipeEnv", "RewardWeights", "StepOutcome", "Terminal",
    "count_elbows", "episode_return_identity", "manhattan", "replay",
]
