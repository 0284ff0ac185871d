"""Reference implementations used only as test oracles."""

from collections import deque

import numpy as np

from piperoute.scene import DIRECTIONS

from conftest import blocked_oracle


def min_axis_distance(scene, cell):
    best = None
    for vec in DIRECTIONS:
        k = 0
        while not blocked_oracle(scene, tuple(c + (k + 1) * v for c, v in zip(cell, vec))):
            k += 1
        best = k if best is None else min(best, k)
    return best


def expanded_graph_optimum(scene, elbow, install, goal_dists=False):
    """Label-correcting shortest path over (cell, incoming direction) nodes.

    Costs in integer units: 10 per move, +100 per turn, +3 per cell of
    min-axis free distance at the entered cell. Returns the optimal cost to
    reach the end (None if unreachable); with ``goal_dists`` also the dict of
    optimal cost-to-go from every node.
    """
    md = {}

    def arrive(cell):
        if cell not in md:
            md[cell] = min_axis_distance(scene, cell)
        return md[cell]

    def edges(node):
        cell, d = node
        for a, vec in enumerate(DIRECTIONS):
            n = (cell[0] + vec[0], cell[1] + vec[1], cell[2] + vec[2])
            if blocked_oracle(scene, n):
                continue
            w = 10
            if elbow and d is not None and d != a:
                w += 100
            if install:
                w += 3 * arrive(n)
            yield (n, a), w

    start = (scene.start, None)
    dist = {start: 0}
    q = deque([start])
    queued = {start}
    while q:
        node = q.popleft()
        queued.discard(node)
        for nxt, w in edges(node):
            c = dist[node] + w
            if c < dist.get(nxt, 1 << 62):
                dist[nxt] = c
                if nxt not in queued:
                    queued.add(nxt)
                    q.append(nxt)
    ends = [c for (cell, _), c in dist.items() if cell == scene.end]
    best = min(ends) if ends else None
    if not goal_dists:
        return best
    # reverse pass: cost-to-go from each node to any end node
    togo = {node: (0 if node[0] == scene.end else 1 << 62) for node in dist}
    changed = True
    while changed:
        changed = False
        for node in dist:
            if node[0] == scene.end:
                continue
            for nxt, w in edges(node):
                if nxt in togo and togo[nxt] + w < togo[node]:
                    togo[node] = togo[nxt] + w
                    changed = True
    return best, togo


def gae_reference(rewards, values, terminal_codes, bootstrap, segments, last_values, gamma, lam):
    """Direct double-loop GAE: sum over future TD residuals of the same episode."""
    n = len(rewards)
    adv = np.zeros(n)
    for (start, stop), last in zip(segments, last_values):
        for t in range(start, stop):
            total = 0.0
            factor = 1.0
            k = t
            while k < stop:
                code = terminal_codes[k]
                if code in (1, 2):
                    nv = 0.0
                elif code == 3:
                    nv = bootstrap[k]
                else:
                    nv = values[k + 1] if k + 1 < stop else last
                delta = rewards[k] + gamma * nv - values[k]
                total += factor * delta
                if code != 0:
                    break
                factor *= gamma * lam
                k += 1
            adv[t] = total
    return adv
