import os
from collections import deque

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from piperoute.scene import DIRECTIONS, ObstacleBox, Scene, SceneConfig, generate_scene

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

TINY = SceneConfig.tiny()


def empty_scene(dims=(10, 10, 10), start=(0, 5, 5), end=None, obstacles=()):
    if end is None:
        end = (dims[0] - 1, start[1], start[2])
    return Scene(dims, start, end, tuple(obstacles))


def box(kind, lo, hi):
    return ObstacleBox(kind, tuple(lo), tuple(hi))


def blocked_oracle(scene, cell):
    """Wall/obstacle test written directly from the box list."""
    if not all(0 <= c < n for c, n in zip(cell, scene.dims)):
        return True
    return any(all(lo <= c < hi for lo, c, hi in zip(b.min, cell, b.max)) for b in scene.obstacles)


def bfs_reachable(scene, start, end):
    seen = {tuple(start)}
    q = deque([tuple(start)])
    while q:
        c = q.popleft()
        if c == tuple(end):
            return True
        for d in DIRECTIONS:
            n = (c[0] + d[0], c[1] + d[1], c[2] + d[2])
            if n not in seen and not blocked_oracle(scene, n):
                seen.add(n)
                q.append(n)
    return False


def tiny_scene(seed):
    return generate_scene(seed, TINY)


@pytest.fixture
def fixture_scene():
    """8x8x6 room: one column against the -x wall and a ceiling beam."""
    return Scene((8, 8, 6), (0, 1, 1), (7, 6, 2),
                 (box("column", (0, 3, 0), (2, 5, 6)), box("main_beam", (2, 0, 4), (4, 8, 6))))


def homing_net(gain=50.0, feature_mask=()):
    """Hand-wired policy: greedy action moves along the axis with the largest
    remaining offset to the end. Reaches the end in any obstacle-free room."""
    from piperoute.observe import layout_hash
    from piperoute.policy import ACT_IDENTITY, ACT_TANH, Layer, PolicyNet

    w1 = np.zeros((66, 3))
    w1[0, 0] = w1[1, 1] = w1[2, 2] = 0.1
    actor = np.zeros((3, 6))
    for axis in range(3):
        actor[axis, 2 * axis] = gain
        actor[axis, 2 * axis + 1] = -gain
    layers = [Layer(w1, np.zeros(3), ACT_TANH), Layer(actor, np.zeros(6), ACT_IDENTITY),
              Layer(np.zeros((3, 1)), np.zeros(1), ACT_IDENTITY)]
    return PolicyNet(layers, layout_hash(feature_mask))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
