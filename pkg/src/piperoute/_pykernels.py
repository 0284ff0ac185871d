"""Pure-Python/numpy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` call for call; the two must agree exactly
(including search tie-breaking and expansion counts).
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

NAME = "python"

DIRS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))

DIAGONALS = (
    (1, 1, 0), (1, -1, 0), (-1, 1, 0), (-1, -1, 0),
    (1, 0, 1), (1, 0, -1), (-1, 0, 1), (-1, 0, -1),
    (0, 1, 1), (0, 1, -1), (0, -1, 1), (0, -1, -1),
    (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
    (-1, 1, 1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1),
)


def _blocked(occ, x, y, z):
    lx, ly, lz = occ.shape
    if x < 0 or y < 0 or z < 0 or x >= lx or y >= ly or z >= lz:
        return True
    return bool(occ[x, y, z])


def axis_distances(occ):
    """Per-cell free run length along each of the six axis directions.

    Returns an int32 array of shape ``(6, Lx, Ly, Lz)``.
    """
    occ = np.asarray(occ, dtype=np.uint8)
    lx, ly, lz = occ.shape
    free = occ == 0
    out = np.zeros((6,) + occ.shape, dtype=np.int32)
    for axis, n in enumerate((lx, ly, lz)):
        pos = np.moveaxis(out[2 * axis], axis, 0)
        neg = np.moveaxis(out[2 * axis + 1], axis, 0)
        f = np.moveaxis(free, axis, 0)
        for i in range(n - 2, -1, -1):
            pos[i] = np.where(f[i + 1], pos[i + 1] + 1, 0)
        for i in range(1, n):
            neg[i] = np.where(f[i - 1], neg[i - 1] + 1, 0)
    return out


def reachable(occ, start, end):
    occ = np.asarray(occ, dtype=np.uint8)
    if _blocked(occ, *start) or _blocked(occ, *end):
        return False
    seen = np.zeros(occ.shape, dtype=bool)
    seen[start] = True
    queue = deque([tuple(start)])
    end = tuple(end)
    while queue:
        c = queue.popleft()
        if c == end:
            return True
        x, y, z = c
        for dx, dy, dz in DIRS:
            n = (x + dx, y + dy, z + dz)
            if not _blocked(occ, *n) and not seen[n]:
                seen[n] = True
                queue.append(n)
    return False


def angle_rays(occ, cur):
    """Free steps along each of the 20 diagonal directions (unnormalized)."""
    x0, y0, z0 = cur
    out = np.zeros(20, dtype=np.float64)
    for i, (dx, dy, dz) in enumerate(DIAGONALS):
        k = 0
        while not _blocked(occ, x0 + (k + 1) * dx, y0 + (k + 1) * dy, z0 + (k + 1) * dz):
            k += 1
        out[i] = k
    return out


def cube_edges(occ, cur, end):
    """Blocked fraction of the 12 edges of the box spanned by ``cur`` and ``end``."""
    occ = np.asarray(occ, dtype=np.uint8)
    lo = [min(a, b) for a, b in zip(cur, end)]
    hi = [max(a, b) for a, b in zip(cur, end)]
    out = np.zeros(12, dtype=np.float64)
    i = 0
    for axis in range(3):
        o1, o2 = [a for a in range(3) if a != axis]
        # corners in lexicographic order of the edge's min corner
        for v1, v2 in sorted((a, b) for a in (lo[o1], hi[o1]) for b in (lo[o2], hi[o2])):
            idx = [0, 0, 0]
            idx[axis] = slice(lo[axis], hi[axis] + 1)
            idx[o1] = v1
            idx[o2] = v2
            out[i] = occ[tuple(idx)].mean()
            i += 1
    return out


def search(occ, mindist, start, end, w_step, w_elbow, w_install, use_heuristic):
    """Best-first search over (cell, incoming direction) states.

    Costs are integers. Returns ``(cells, cost, expanded)`` with ``cells`` an
    ``(n, 3)`` int32 array, or ``(None, -1, expanded)`` if the end is
    unreachable.
    """
    occ = np.asarray(occ, dtype=np.uint8)
    lx, ly, lz = occ.shape
    ncell = lx * ly * lz
    nnode = 7 * ncell
    sx, sy, sz = start
    ex, ey, ez = end
    flat_occ = occ.ravel(order="F").tolist()
    flat_md = np.asarray(mindist).ravel(order="F").tolist()
    inf = 1 << 62
    g = [inf] * nnode
    parent = [-1] * nnode
    closed = bytearray(nnode)

    def h(x, y, z):
        if not use_heuristic:
            return 0
        return w_step * (abs(x - ex) + abs(y - ey) + abs(z - ez))

    s_cell = sx + lx * (sy + ly * sz)
    s_node = s_cell * 7
    g[s_node] = 0
    hs = h(sx, sy, sz)
    heap = [(hs, hs * nnode + s_node)]
    expanded = 0
    goal = -1
    while heap:
        f, key = heapq.heappop(heap)
        node = key % nnode
        if closed[node]:
            continue
        closed[node] = 1
        expanded += 1
        cell, din = divmod(node, 7)
        x = cell % lx
        y = (cell // lx) % ly
        z = cell // (lx * ly)
        if x == ex and y == ey and z == ez:
            goal = node
            break
        gcur = g[node]
        for a in range(6):
            dx, dy, dz = DIRS[a]
            nx, ny, nz = x + dx, y + dy, z + dz
            if nx < 0 or ny < 0 or nz < 0 or nx >= lx or ny >= ly or nz >= lz:
                continue
            ncell_i = nx + lx * (ny + ly * nz)
            if flat_occ[ncell_i]:
                continue
            nnode_i = ncell_i * 7 + a + 1
            if closed[nnode_i]:
                continue
            cost = gcur + w_step + w_install * flat_md[ncell_i]
            if din != 0 and din != a + 1:
                cost += w_elbow
            if cost < g[nnode_i]:
                g[nnode_i] = cost
                parent[nnode_i] = node
                hn = h(nx, ny, nz)
                heapq.heappush(heap, (cost + hn, hn * nnode + nnode_i))
    if goal < 0:
        return None, -1, expanded
    cells = []
    node = goal
    while node >= 0:
        cell = node // 7
        cells.append((cell % lx, (cell // lx) % ly, cell // (lx * ly)))
        node = parent[node]
    cells.reverse()
    return np.asarray(cells, dtype=np.int32), g[goal], expanded


def observe_into(occ, dist, cur, end, prev_dir, out):
    """Fill the 66-element feature vector in place (no ablation mask)."""
    lx, ly, lz = occ.shape
    m = float(max(lx, ly, lz))
    cx, cy, cz = cur
    ex, ey, ez = end
    out[0] = (ex - cx) / lx
    out[1] = (ey - cy) / ly
    out[2] = (ez - cz) / lz
    out[3:10] = 0.0
    out[3 + prev_dir + 1] = 1.0
    out[10:22] = cube_edges(occ, cur, end)
    out[22:42] = np.minimum(angle_rays(occ, cur) / m, 1.0)
    i = 42
    for dx, dy, dz in DIRS:
        for k in (1, 2, 3):
            out[i] = 1.0 if _blocked(occ, cx + k * dx, cy + k * dy, cz + k * dz) else 0.0
            i += 1
    out[60:66] = np.minimum(dist[:, cx, cy, cz] / m, 1.0)
