# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, int32_t, uint8_t
from libc.stdlib cimport malloc, realloc, free

cnp.import_array()

NAME = "cython"

cdef int DX[6]
cdef int DY[6]
cdef int DZ[6]
DX[:] = [1, -1, 0, 0, 0, 0]
DY[:] = [0, 0, 1, -1, 0, 0]
DZ[:] = [0, 0, 0, 0, 1, -1]

cdef int GX[20]
cdef int GY[20]
cdef int GZ[20]
GX[:] = [1, 1, -1, -1, 1, 1, -1, -1, 0, 0, 0, 0, 1, 1, 1, 1, -1, -1, -1, -1]
GY[:] = [1, -1, 1, -1, 0, 0, 0, 0, 1, 1, -1, -1, 1, 1, -1, -1, 1, 1, -1, -1]
GZ[:] = [0, 0, 0, 0, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1]


cdef inline bint _blocked(const uint8_t[:, :, ::1] occ, int x, int y, int z) noexcept nogil:
    if x < 0 or y < 0 or z < 0:
        return True
    if x >= occ.shape[0] or y >= occ.shape[1] or z >= occ.shape[2]:
        return True
    return occ[x, y, z] != 0


def axis_distances(occ_in):
    cdef const uint8_t[:, :, ::1] occ = np.ascontiguousarray(occ_in, dtype=np.uint8)
    cdef int lx = occ.shape[0], ly = occ.shape[1], lz = occ.shape[2]
    out = np.zeros((6, lx, ly, lz), dtype=np.int32)
    cdef int32_t[:, :, :, ::1] d = out
    cdef int x, y, z
    with nogil:
        for y in range(ly):
            for z in range(lz):
                for x in range(lx - 2, -1, -1):
                    if occ[x + 1, y, z] == 0:
                        d[0, x, y, z] = d[0, x + 1, y, z] + 1
                for x in range(1, lx):
                    if occ[x - 1, y, z] == 0:
                        d[1, x, y, z] = d[1, x - 1, y, z] + 1
        for x in range(lx):
            for z in range(lz):
                for y in range(ly - 2, -1, -1):
                    if occ[x, y + 1, z] == 0:
                        d[2, x, y, z] = d[2, x, y + 1, z] + 1
                for y in range(1, ly):
                    if occ[x, y - 1, z] == 0:
                        d[3, x, y, z] = d[3, x, y - 1, z] + 1
            for y in range(ly):
                for z in range(lz - 2, -1, -1):
                    if occ[x, y, z + 1] == 0:
                        d[4, x, y, z] = d[4, x, y, z + 1] + 1
                for z in range(1, lz):
                    if occ[x, y, z - 1] == 0:
                        d[5, x, y, z] = d[5, x, y, z - 1] + 1
    return out


def reachable(occ_in, start, end):
    cdef const uint8_t[:, :, ::1] occ = np.ascontiguousarray(occ_in, dtype=np.uint8)
    cdef int lx = occ.shape[0], ly = occ.shape[1], lz = occ.shape[2]
    cdef int sx = start[0], sy = start[1], sz = start[2]
    cdef int ex = end[0], ey = end[1], ez = end[2]
    if _blocked(occ, sx, sy, sz) or _blocked(occ, ex, ey, ez):
        return False
    cdef Py_ssize_t n = <Py_ssize_t>lx * ly * lz
    seen_arr = np.zeros(n, dtype=np.uint8)
    queue_arr = np.empty(n, dtype=np.int64)
    cdef uint8_t[::1] seen = seen_arr
    cdef int64_t[::1] queue = queue_arr
    cdef Py_ssize_t head = 0, tail = 0
    cdef int64_t c, nc
    cdef int x, y, z, nx, ny, nz, a
    cdef int64_t target = ex + <int64_t>lx * (ey + <int64_t>ly * ez)
    cdef bint found = False
    c = sx + <int64_t>lx * (sy + <int64_t>ly * sz)
    seen[c] = 1
    queue[tail] = c
    tail += 1
    with nogil:
        while head < tail:
            c = queue[head]
            head += 1
            if c == target:
                found = True
                break
            x = c % lx
            y = (c // lx) % ly
            z = c // (<int64_t>lx * ly)
            for a in range(6):
                nx = x + DX[a]
                ny = y + DY[a]
                nz = z + DZ[a]
                if _blocked(occ, nx, ny, nz):
                    continue
                nc = nx + <int64_t>lx * (ny + <int64_t>ly * nz)
                if seen[nc]:
                    continue
                seen[nc] = 1
                queue[tail] = nc
                tail += 1
    return found


def angle_rays(occ_in, cur):
    cdef const uint8_t[:, :, ::1] occ = np.ascontiguousarray(occ_in, dtype=np.uint8)
    out = np.zeros(20, dtype=np.float64)
    cdef double[::1] o = out
    _angle_rays(occ, cur[0], cur[1], cur[2], o, 0)
    return out


cdef void _angle_rays(const uint8_t[:, :, ::1] occ, int x0, int y0, int z0,
                      double[::1] out, int offset) noexcept nogil:
    cdef int i, k
    for i in range(20):
        k = 0
        while not _blocked(occ, x0 + (k + 1) * GX[i], y0 + (k + 1) * GY[i], z0 + (k + 1) * GZ[i]):
            k += 1
        out[offset + i] = k


cdef void _cube_edges(const uint8_t[:, :, ::1] occ, int cx, int cy, int cz,
                      int ex, int ey, int ez, double[::1] out, int offset) noexcept nogil:
    cdef int lo[3]
    cdef int hi[3]
    cdef int p[3]
    cdef int c0[3]
    c0[0] = cx; c0[1] = cy; c0[2] = cz
    lo[0] = cx if cx < ex else ex
    lo[1] = cy if cy < ey else ey
    lo[2] = cz if cz < ez else ez
    hi[0] = cx if cx > ex else ex
    hi[1] = cy if cy > ey else ey
    hi[2] = cz if cz > ez else ez
    cdef int axis, o1, o2, j1, j2, k, t, count, i = 0
    for axis in range(3):
        if axis == 0:
            o1 = 1; o2 = 2
        elif axis == 1:
            o1 = 0; o2 = 2
        else:
            o1 = 0; o2 = 1
        # corners in lexicographic order of the edge's min corner
        for k in range(4):
            if lo[o1] == hi[o1]:
                j1 = 0; j2 = k >> 1
            else:
                j1 = k >> 1; j2 = k & 1
            p[o1] = lo[o1] if j1 == 0 else hi[o1]
            p[o2] = lo[o2] if j2 == 0 else hi[o2]
            count = 0
            for t in range(lo[axis], hi[axis] + 1):
                p[axis] = t
                if occ[p[0], p[1], p[2]] != 0:
                    count += 1
            out[offset + i] = <double>count / (hi[axis] - lo[axis] + 1)
            i += 1


def cube_edges(occ_in, cur, end):
    cdef const uint8_t[:, :, ::1] occ = np.ascontiguousarray(occ_in, dtype=np.uint8)
    out = np.zeros(12, dtype=np.float64)
    cdef double[::1] o = out
    _cube_edges(occ, cur[0], cur[1], cur[2], end[0], end[1], end[2], o, 0)
    return out


def observe_into(const uint8_t[:, :, ::1] occ, const int32_t[:, :, :, ::1] dist,
                 cur, end, int prev_dir, double[::1] out):
    """Fill the 66-element feature vector in place (no ablation mask)."""
    cdef int cx = cur[0], cy = cur[1], cz = cur[2]
    cdef int ex = end[0], ey = end[1], ez = end[2]
    cdef int lx = occ.shape[0], ly = occ.shape[1], lz = occ.shape[2]
    cdef double m = lx
    cdef int i, a, k
    cdef double v
    if ly > m:
        m = ly
    if lz > m:
        m = lz
    with nogil:
        out[0] = <double>(ex - cx) / lx
        out[1] = <double>(ey - cy) / ly
        out[2] = <double>(ez - cz) / lz
        for i in range(3, 10):
            out[i] = 0.0
        out[3 + prev_dir + 1] = 1.0
        _cube_edges(occ, cx, cy, cz, ex, ey, ez, out, 10)
        _angle_rays(occ, cx, cy, cz, out, 22)
        for i in range(22, 42):
            v = out[i] / m
            out[i] = 1.0 if v > 1.0 else v
        for a in range(6):
            for k in range(1, 4):
                out[42 + 3 * a + k - 1] = 1.0 if _blocked(occ, cx + k * DX[a], cy + k * DY[a], cz + k * DZ[a]) else 0.0
        for a in range(6):
            v = dist[a, cx, cy, cz] / m
            out[60 + a] = 1.0 if v > 1.0 else v


# binary min-heap on (k1, k2) pairs
cdef struct HeapItem:
    int64_t k1
    int64_t k2


cdef inline bint _less(HeapItem a, HeapItem b) noexcept nogil:
    return a.k1 < b.k1 or (a.k1 == b.k1 and a.k2 < b.k2)


cdef struct Heap:
    HeapItem* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int _heap_push(Heap* h, int64_t k1, int64_t k2) noexcept nogil:
    cdef HeapItem* grown
    cdef Py_ssize_t i, parent
    cdef HeapItem item
    if h.size == h.cap:
        grown = <HeapItem*>realloc(h.data, 2 * h.cap * sizeof(HeapItem))
        if grown == NULL:
            return -1
        h.data = grown
        h.cap *= 2
    item.k1 = k1
    item.k2 = k2
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(item, h.data[parent]):
            h.data[i] = h.data[parent]
            i = parent
        else:
            break
    h.data[i] = item
    return 0


cdef HeapItem _heap_pop(Heap* h) noexcept nogil:
    cdef HeapItem top = h.data[0]
    cdef HeapItem last
    cdef Py_ssize_t i = 0, child
    h.size -= 1
    if h.size > 0:
        last = h.data[h.size]
        while True:
            child = 2 * i + 1
            if child >= h.size:
                break
            if child + 1 < h.size and _less(h.data[child + 1], h.data[child]):
                child += 1
            if _less(h.data[child], last):
                h.data[i] = h.data[child]
                i = child
            else:
                break
        h.data[i] = last
    return top


def search(occ_in, mindist_in, start, end, int64_t w_step, int64_t w_elbow,
           int64_t w_install, bint use_heuristic):
    cdef const uint8_t[:, :, ::1] occ = np.ascontiguousarray(occ_in, dtype=np.uint8)
    cdef const int32_t[:, :, ::1] md = np.ascontiguousarray(mindist_in, dtype=np.int32)
    cdef int lx = occ.shape[0], ly = occ.shape[1], lz = occ.shape[2]
    cdef int64_t ncell = <int64_t>lx * ly * lz
    cdef int64_t nnode = 7 * ncell
    cdef int sx = start[0], sy = start[1], sz = start[2]
    cdef int ex = end[0], ey = end[1], ez = end[2]
    cdef int64_t INF = (<int64_t>1) << 62

    g_arr = np.full(nnode, INF, dtype=np.int64)
    parent_arr = np.full(nnode, -1, dtype=np.int64)
    closed_arr = np.zeros(nnode, dtype=np.uint8)
    cdef int64_t[::1] g = g_arr
    cdef int64_t[::1] parent = parent_arr
    cdef uint8_t[::1] closed = closed_arr

    cdef Heap heap
    heap.cap = 1024
    heap.size = 0
    heap.data = <HeapItem*>malloc(heap.cap * sizeof(HeapItem))
    if heap.data == NULL:
        raise MemoryError()

    cdef int64_t node, cell, nnode_i, ncell_i, cost, hn, gcur
    cdef int din, a, x, y, z, nx, ny, nz
    cdef int64_t expanded = 0
    cdef int64_t goal = -1
    cdef HeapItem top
    cdef int err = 0

    node = (sx + <int64_t>lx * (sy + <int64_t>ly * sz)) * 7
    g[node] = 0
    hn = w_step * (abs(sx - ex) + abs(sy - ey) + abs(sz - ez)) if use_heuristic else 0
    _heap_push(&heap, hn, hn * nnode + node)
    with nogil:
        while heap.size > 0:
            top = _heap_pop(&heap)
            node = top.k2 % nnode
            if closed[node]:
                continue
            closed[node] = 1
            expanded += 1
            cell = node // 7
            din = node % 7
            x = cell % lx
            y = (cell // lx) % ly
            z = cell // (<int64_t>lx * ly)
            if x == ex and y == ey and z == ez:
                goal = node
                break
            gcur = g[node]
            for a in range(6):
                nx = x + DX[a]
                ny = y + DY[a]
                nz = z + DZ[a]
                if nx < 0 or ny < 0 or nz < 0 or nx >= lx or ny >= ly or nz >= lz:
                    continue
                if occ[nx, ny, nz] != 0:
                    continue
                ncell_i = nx + <int64_t>lx * (ny + <int64_t>ly * nz)
                nnode_i = ncell_i * 7 + a + 1
                if closed[nnode_i]:
                    continue
                cost = gcur + w_step + w_install * md[nx, ny, nz]
                if din != 0 and din != a + 1:
                    cost += w_elbow
                if cost < g[nnode_i]:
                    g[nnode_i] = cost
                    parent[nnode_i] = node
                    if use_heuristic:
                        hn = w_step * (abs(nx - ex) + abs(ny - ey) + abs(nz - ez))
                    else:
                        hn = 0
                    if _heap_push(&heap, cost + hn, hn * nnode + nnode_i) != 0:
                        err = 1
                        break
            if err:
                break
    free(heap.data)
    if err:
        raise MemoryError()
    if goal < 0:
        return None, -1, int(expanded)
    cells = []
    node = goal
    while node >= 0:
        cell = node // 7
        cells.append((cell % lx, (cell // lx) % ly, cell // (<int64_t>lx * ly)))
        node = parent[node]
    cells.reverse()
    return np.asarray(cells, dtype=np.int32), int(g[goal]), int(expanded)
