"""Fixed-length (66) observation vector, independent of scene size.

Block layout, in order::

    relative_coordinate   3   (end - cur) / dims, in [-1, 1]
    direction             7   one-hot: none, +x, -x, +y, -y, +z, -z
    cube_edge            12   blocked fraction on the edges of the cur/end box
    angle                20   diagonal ray free length / max(dims), capped at 1
    cross                18   blocked flag at offsets 1..3 along each axis direction
    distance              6   axis free distance / max(dims), capped at 1

Cube edges are ordered x-parallel, y-parallel, z-parallel; within a group by
the edge's min corner. Diagonals are the 12 face diagonals (xy, xz, yz planes,
sign pairs ``++ +- -+ --``) followed by the 8 space diagonals in
lexicographic sign order starting at ``+++``.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import kernels
from ._pykernels import DIAGONALS
from .scene import DIRECTION_NAMES, DIRECTIONS, is_blocked

BLOCKS = (
    ("relative_coordinate", 3),
    ("direction", 7),
    ("cube_edge", 12),
    ("angle", 20),
    ("cross", 18),
    ("distance", 6),
)
OBS_DIM = sum(n for _, n in BLOCKS)

BLOCK_SLICES = {}
_off = 0
for _name, _n in BLOCKS:
    BLOCK_SLICES[_name] = slice(_off, _off + _n)
    _off += _n
del _off, _name, _n

BLOCK_RANGES = {name: ((-1.0, 1.0) if name == "relative_coordinate" else (0.0, 1.0)) for name, _ in BLOCKS}


def layout_hash(feature_mask=()):
    """u64 fingerprint of the observation layout and any zero-filled blocks."""
    unknown = set(feature_mask) - set(BLOCK_SLICES)
    if unknown:
        raise ValueError(f"unknown feature blocks: {sorted(unknown)}")
    desc = ";".join(f"{n}:{k}" for n, k in BLOCKS)
    desc += "|dirs:" + ",".join(DIRECTION_NAMES)
    desc += "|diag:" + ",".join("".join({1: "+", -1: "-", 0: "0"}[v] for v in d) for d in DIAGONALS)
    desc += "|masked:" + ",".join(sorted(feature_mask))
    return int.from_bytes(hashlib.sha256(desc.encode()).digest()[:8], "little")


def relative_coordinate(scene, cur):
    return np.array([(e - c) / n for e, c, n in zip(scene.end, cur, scene.dims)])


def direction_onehot(prev_dir):
    """``prev_dir`` is ``None`` at episode start, otherwise an action index 0..5."""
    out = np.zeros(7)
    out[0 if prev_dir is None else prev_dir + 1] = 1.0
    return out


def cube_edge_occupancy(scene, cur, end=None):
    return kernels.impl.cube_edges(scene.occupancy, tuple(cur), tuple(scene.end if end is None else end))


def angle_rays(scene, cur):
    steps = kernels.impl.angle_rays(scene.occupancy, tuple(cur))
    return np.minimum(steps / scene.max_dim, 1.0)


def cross_occupancy(scene, cur):
    out = np.zeros(18)
    for a, d in enumerate(DIRECTIONS):
        for k in (1, 2, 3):
            out[3 * a + k - 1] = float(is_blocked(scene, tuple(c + k * v for c, v in zip(cur, d))))
    return out


def distance_six(scene, cur):
    return np.minimum(scene.axis_distances[(slice(None),) + tuple(cur)] / scene.max_dim, 1.0)


def observe(scene, cur, prev_dir=None, feature_mask=(), out=None):
    """Full observation for an agent at ``cur`` that last moved along ``prev_dir``.

    Blocks named in ``feature_mask`` are zero-filled; the length stays 66.
    """
    if out is None:
        out = np.empty(OBS_DIM)
    kernels.impl.observe_into(scene.occupancy, scene.axis_distances, tuple(cur), scene.end,
                              -1 if prev_dir is None else int(prev_dir), out)
    for name in feature_mask:
        out[BLOCK_SLICES[name]] = 0.0
    return out


def observe_blocks(scene, cur, prev_dir=None, feature_mask=()):
    """Per-block reference assembly of the observation (slow path)."""
    parts = {
        "relative_coordinate": relative_coordinate(scene, cur),
        "direction": direction_onehot(prev_dir),
        "cube_edge": cube_edge_occupancy(scene, cur),
        "angle": angle_rays(scene, cur),
        "cross": cross_occupancy(scene, cur),
        "distance": distance_six(scene, cur),
    }
    for name in feature_mask:
        parts[name] = np.zeros_like(parts[name])
    return np.concatenate([parts[name] for name, _ in BLOCKS])
