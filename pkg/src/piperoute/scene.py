"""Rasterized building scenes: generation, collision queries and the JSON file format.

Geometry conventions:

* cells are integer ``(x, y, z)`` triples, one cell is 10 cm;
* obstacle boxes are half-open, ``min <= cell < max`` componentwise;
* walls are implicit: any out-of-bounds cell is blocked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import kernels
from .errors import GenerationExhausted, ParseError

CELL_SIZE_M = 0.1
MAX_ATTEMPTS = 100
FORMAT_VERSION = 1
U64_MASK = (1 << 64) - 1

# Action / direction order used everywhere (mask bits, one-hot, search states).
DIRECTIONS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
DIRECTION_NAMES = ("+x", "-x", "+y", "-y", "+z", "-z")
KINDS = ("column", "main_beam", "secondary_beam")

ROOM_MIN_DIMS = (50, 50, 28)
ROOM_MAX_DIMS = (100, 100, 40)


def opposite(d):
    return d ^ 1


@dataclass(frozen=True)
class ObstacleBox:
    kind: str
    min: tuple
    max: tuple

    def contains(self, cell):
        return all(lo <= c < hi for lo, c, hi in zip(self.min, cell, self.max))

    @property
    def size(self):
        return tuple(hi - lo for lo, hi in zip(self.min, self.max))

    @property
    def cross_section(self):
        """``(depth, width)`` of a beam: vertical extent and the shorter plan extent."""
        sx, sy, sz = self.size
        return sz, min(sx, sy)


@dataclass(frozen=True)
class Scene:
    dims: tuple
    start: tuple
    end: tuple
    obstacles: tuple = ()
    seed: int = 0
    cell_size_m: float = CELL_SIZE_M

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))
        object.__setattr__(self, "end", tuple(int(v) for v in self.end))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @cached_property
    def occupancy(self):
        """uint8 grid, 1 where an obstacle occupies the cell. Read-only."""
        occ = np.zeros(self.dims, dtype=np.uint8)
        for box in self.obstacles:
            occ[box.min[0]:box.max[0], box.min[1]:box.max[1], box.min[2]:box.max[2]] = 1
        occ.flags.writeable = False
        return occ

    @cached_property
    def axis_distances(self):
        """Free run length along each axis direction, shape ``(6, Lx, Ly, Lz)``."""
        d = kernels.impl.axis_distances(self.occupancy)
        d.flags.writeable = False
        return d

    @cached_property
    def min_distance(self):
        """Installation distance field: min over the six axis free distances."""
        d = np.ascontiguousarray(self.axis_distances.min(axis=0), dtype=np.int32)
        d.flags.writeable = False
        return d

    @property
    def max_dim(self):
        return max(self.dims)

    def in_bounds(self, cell):
        return all(0 <= c < n for c, n in zip(cell, self.dims))

    def cell_index(self, cell):
        lx, ly, _ = self.dims
        x, y, z = cell
        return x + lx * (y + ly * z)


def is_blocked(scene, cell):
    """True if ``cell`` is out of bounds (wall) or inside an obstacle box."""
    if not scene.in_bounds(cell):
        return True
    return bool(scene.occupancy[tuple(cell)])


def is_wall_adjacent(scene, cell):
    return any(not scene.in_bounds(np.add(cell, d)) for d in DIRECTIONS)


def is_solvable(scene):
    return bool(kernels.impl.reachable(scene.occupancy, scene.start, scene.end))


def free_distance(scene, cell, direction):
    """Unblocked cells strictly beyond ``cell`` along ``direction`` (index 0..5)."""
    return int(scene.axis_distances[direction][tuple(cell)])


def min_free_distance(scene, cell):
    return int(scene.min_distance[tuple(cell)])


def validate_scene(scene, room_dims=False):
    """Return a list of invariant violations (empty when the scene is valid)."""
    problems = []
    if len(scene.dims) != 3 or any(n < 1 for n in scene.dims):
        return [f"dims {scene.dims} are not three positive integers"]
    if room_dims and not all(lo <= n <= hi for lo, n, hi in zip(ROOM_MIN_DIMS, scene.dims, ROOM_MAX_DIMS)):
        problems.append(f"dims {scene.dims} outside {ROOM_MIN_DIMS}..{ROOM_MAX_DIMS}")
    for i, box in enumerate(scene.obstacles):
        if box.kind not in KINDS:
            problems.append(f"obstacle {i}: unknown kind {box.kind!r}")
        if not all(lo < hi for lo, hi in zip(box.min, box.max)):
            problems.append(f"obstacle {i}: min {box.min} not < max {box.max}")
        if not all(0 <= lo and hi <= n for lo, hi, n in zip(box.min, box.max, scene.dims)):
            problems.append(f"obstacle {i}: outside scene bounds")
    mains = [b.cross_section for b in scene.obstacles if b.kind == "main_beam"]
    secs = [b.cross_section for b in scene.obstacles if b.kind == "secondary_beam"]
    if mains and secs and min(d * w for d, w in mains) <= max(d * w for d, w in secs):
        problems.append("secondary beam cross-section not smaller than every main beam")
    for name in ("start", "end"):
        c = getattr(scene, name)
        if not scene.in_bounds(c):
            problems.append(f"{name} {c} out of bounds")
        elif is_blocked(scene, c):
            problems.append(f"{name} {c} inside an obstacle")
        elif not is_wall_adjacent(scene, c):
            problems.append(f"{name} {c} is not on a wall")
    if scene.start == scene.end:
        problems.append("start equals end")
    if not problems and not is_solvable(scene):
        problems.append("end unreachable from start")
    return problems


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneConfig:
    """Ranges (inclusive) for the procedural scene recipe.

    The default matches the room sizes of real buildings (5-10 m plan,
    2.8-4 m storey). ``smoke()`` and ``tiny()`` are scaled-down variants for
    fast training and exhaustive planner checks.
    """

    min_dims: tuple = ROOM_MIN_DIMS
    max_dims: tuple = ROOM_MAX_DIMS
    column_size: tuple = (4, 8)
    extra_columns: tuple = (0, 4)
    main_depth: tuple = (5, 8)
    main_width: tuple = (3, 5)
    main_spans: tuple = (1, 3)
    perimeter_beams: bool = True
    secondary_spans: tuple = (2, 6)

    @classmethod
    def smoke(cls, dims=(20, 20, 15)):
        return cls(min_dims=tuple(dims), max_dims=tuple(dims), column_size=(2, 3),
                   extra_columns=(0, 2), main_depth=(3, 4), main_width=(2, 3),
                   main_spans=(1, 2), secondary_spans=(1, 3))

    @classmethod
    def tiny(cls, min_dims=(6, 6, 4), max_dims=(8, 8, 6)):
        return cls(min_dims=tuple(min_dims), max_dims=tuple(max_dims), column_size=(1, 2),
                   extra_columns=(0, 3), main_depth=(2, 2), main_width=(2, 2),
                   main_spans=(0, 1), perimeter_beams=False, secondary_spans=(0, 2))

    @classmethod
    def with_dims(cls, min_dims, max_dims=None):
        """Pick the preset whose obstacle sizes suit the requested room size."""
        if min(min_dims) >= 28:
            base = cls()
        elif min(min_dims[:2]) >= 12:
            base = cls.smoke()
        else:
            base = cls.tiny()
        return replace(base, min_dims=tuple(min_dims), max_dims=tuple(max_dims or min_dims))

    def check(self):
        for name in ("column_size", "extra_columns", "main_depth", "main_width",
                     "main_spans", "secondary_spans"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name}: bad range {(lo, hi)}")
        if any(lo > hi or lo < 3 for lo, hi in zip(self.min_dims, self.max_dims)):
            raise ValueError(f"bad dims range {self.min_dims}..{self.max_dims}")
        if self.column_size[0] < 1 or self.main_depth[0] < 2 or self.main_width[0] < 2:
            raise ValueError("columns need size >= 1 and main beams depth/width >= 2")


def substream(seed, *keys):
    """Deterministic numpy Generator for ``(seed, *keys)`` (PCG64 over SeedSequence)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & U64_MASK, *keys])))


def derive_seed(seed, *keys):
    """A u64 child seed derived from ``(seed, *keys)``."""
    words = np.random.SeedSequence([int(seed) & U64_MASK, *keys]).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def _draw(rng, lo_hi):
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def _draw_obstacles(rng, dims, cfg):
    lx, ly, lz = dims
    boxes = []
    plan_cap = max(1, min(lx, ly) // 4)

    def column(x0, y0, s):
        boxes.append(ObstacleBox("column", (x0, y0, 0), (x0 + s, y0 + s, lz)))

    for cx, cy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        s = min(_draw(rng, cfg.column_size), plan_cap)
        column(0 if cx == 0 else lx - s, 0 if cy == 0 else ly - s, s)
    for _ in range(_draw(rng, cfg.extra_columns)):
        s = min(_draw(rng, cfg.column_size), plan_cap)
        wall = int(rng.integers(4))
        if wall < 2:
            y0 = int(rng.integers(0, ly - s + 1))
            column(0 if wall == 0 else lx - s, y0, s)
        else:
            x0 = int(rng.integers(0, lx - s + 1))
            column(x0, 0 if wall == 2 else ly - s, s)

    depth_cap = max(2, lz // 3)
    mains = []

    def beam(kind, along_x, pos, depth, width):
        if along_x:
            box = ObstacleBox(kind, (0, pos, lz - depth), (lx, pos + width, lz))
        else:
            box = ObstacleBox(kind, (pos, 0, lz - depth), (pos + width, ly, lz))
        boxes.append(box)
        return box

    def main_size():
        return min(_draw(rng, cfg.main_depth), depth_cap), min(_draw(rng, cfg.main_width), plan_cap)

    if cfg.perimeter_beams:
        for along_x, far in ((True, False), (True, True), (False, False), (False, True)):
            d, w = main_size()
            span = ly if along_x else lx
            mains.append(beam("main_beam", along_x, span - w if far else 0, d, w))
    spans_along_x = bool(rng.integers(2))
    for _ in range(_draw(rng, cfg.main_spans)):
        d, w = main_size()
        span = ly if spans_along_x else lx
        pos = int(rng.integers(w, max(w, span - 2 * w) + 1))
        mains.append(beam("main_beam", spans_along_x, pos, d, w))

    if mains:
        max_sd = min(b.cross_section[0] for b in mains) - 1
        max_sw = min(b.cross_section[1] for b in mains) - 1
    else:
        max_sd, max_sw = cfg.main_depth[0] - 1, cfg.main_width[0] - 1
    if max_sd >= 1 and max_sw >= 1:
        for _ in range(_draw(rng, cfg.secondary_spans)):
            d = int(rng.integers(max(1, max_sd - 2), max_sd + 1))
            w = int(rng.integers(1, max_sw + 1))
            span = lx if spans_along_x else ly
            pos = int(rng.integers(0, span - w + 1))
            beam("secondary_beam", not spans_along_x, pos, d, w)
    return boxes


def _wall_cells(occ, wall):
    lx, ly, _ = occ.shape
    if wall == 0:
        plane, fix = occ[0], lambda a, b: (0, a, b)
    elif wall == 1:
        plane, fix = occ[lx - 1], lambda a, b: (lx - 1, a, b)
    elif wall == 2:
        plane, fix = occ[:, 0], lambda a, b: (a, 0, b)
    else:
        plane, fix = occ[:, ly - 1], lambda a, b: (a, ly - 1, b)
    free = np.argwhere(plane == 0)
    return free, fix


def _draw_scene(seed, attempt, cfg):
    rng = substream(seed, attempt)
    dims = tuple(_draw(rng, (lo, hi)) for lo, hi in zip(cfg.min_dims, cfg.max_dims))
    boxes = _draw_obstacles(rng, dims, cfg)
    scene = Scene(dims, (0, 0, 0), (0, 0, 0), tuple(boxes), seed)
    occ = scene.occupancy
    walls = rng.choice(4, size=2, replace=False)
    ends = []
    for wall in walls:
        free, fix = _wall_cells(occ, int(wall))
        if len(free) == 0:
            return None
        a, b = free[int(rng.integers(len(free)))]
        ends.append(fix(int(a), int(b)))
    if ends[0] == ends[1]:
        return None
    scene = Scene(dims, ends[0], ends[1], tuple(boxes), seed)
    return scene if is_solvable(scene) else None


def generate_scene(seed, config=None):
    """Draw a random solvable scene; a pure function of ``(seed, config)``.

    Unsolvable draws are redrawn from the ``(seed, attempt)`` substream, up to
    ``MAX_ATTEMPTS`` times.
    """
    cfg = config or SceneConfig()
    cfg.check()
    seed = int(seed) & U64_MASK
    for attempt in range(MAX_ATTEMPTS):
        scene = _draw_scene(seed, attempt, cfg)
        if scene is not None:
            return scene
    raise GenerationExhausted(f"no solvable scene for seed {seed} after {MAX_ATTEMPTS} draws")


# --------------------------------------------------------------------------
# File format
# --------------------------------------------------------------------------

def scene_to_dict(scene):
    return {
        "version": FORMAT_VERSION,
        "seed": int(scene.seed),
        "dims": list(scene.dims),
        "cell_size_m": scene.cell_size_m,
        "start": list(scene.start),
        "end": list(scene.end),
        "obstacles": [
            {"kind": b.kind, "min": list(b.min), "max": list(b.max)} for b in scene.obstacles
        ],
    }


def serialize_scene(scene):
    """Canonical UTF-8 JSON bytes (fixed key order, compact separators)."""
    text = json.dumps(scene_to_dict(scene), separators=(",", ":"), ensure_ascii=True)
    return (text + "\n").encode("utf-8")


def _triple(obj, name):
    if not (isinstance(obj, list) and len(obj) == 3
            and all(isinstance(v, int) and not isinstance(v, bool) for v in obj)):
        raise ParseError("expected a list of three integers", field=name)
    return tuple(obj)


def parse_scene(data):
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from None
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(obj, dict):
        raise ParseError("top level must be an object")
    for key in ("version", "seed", "dims", "cell_size_m", "start", "end", "obstacles"):
        if key not in obj:
            raise ParseError("missing required key", field=key)
    if obj["version"] != FORMAT_VERSION:
        raise ParseError(f"unsupported version {obj['version']!r}", field="version")
    seed = obj["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= U64_MASK:
        raise ParseError("seed must be an unsigned 64-bit integer", field="seed")
    dims = _triple(obj["dims"], "dims")
    if any(n < 1 for n in dims):
        raise ParseError("dims must be positive", field="dims")
    if not isinstance(obj["cell_size_m"], (int, float)) or obj["cell_size_m"] <= 0:
        raise ParseError("cell_size_m must be a positive number", field="cell_size_m")
    if not isinstance(obj["obstacles"], list):
        raise ParseError("expected a list", field="obstacles")
    boxes = []
    for i, o in enumerate(obj["obstacles"]):
        where = f"obstacles[{i}]"
        if not isinstance(o, dict):
            raise ParseError("expected an object", field=where)
        for key in ("kind", "min", "max"):
            if key not in o:
                raise ParseError("missing required key", field=f"{where}.{key}")
        if o["kind"] not in KINDS:
            raise ParseError(f"unknown kind {o['kind']!r}", field=f"{where}.kind")
        box = ObstacleBox(o["kind"], _triple(o["min"], f"{where}.min"), _triple(o["max"], f"{where}.max"))
        if not all(0 <= lo < hi <= n for lo, hi, n in zip(box.min, box.max, dims)):
            raise ParseError("box empty or outside the scene", field=where)
        boxes.append(box)
    scene = Scene(dims, _triple(obj["start"], "start"), _triple(obj["end"], "end"),
                  tuple(boxes), seed, float(obj["cell_size_m"]))
    for name in ("start", "end"):
        c = getattr(scene, name)
        if is_blocked(scene, c):
            raise ParseError("cell is out of bounds or inside an obstacle", field=name)
    if scene.start == scene.end:
        raise ParseError("start equals end", field="end")
    return scene


def load_scene(path):
    with open(path, "rb") as fh:
        return parse_scene(fh.read())


def save_scene(scene, path):
    from .io import atomic_write
    atomic_write(path, serialize_scene(scene))
