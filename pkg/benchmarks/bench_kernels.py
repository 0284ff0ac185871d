"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--scenes N] [--repeat R]

Both backends run on the same seeded scenes; results are checked for
equality before timings are reported.
"""

import argparse
import time

import numpy as np

from piperoute import kernels
from piperoute.planner import TABLE_CONSTRAINTS
from piperoute.scene import SceneConfig, derive_seed, generate_scene


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads(scene, rng):
    occ = scene.occupancy
    md = scene.min_distance
    dist = np.ascontiguousarray(scene.axis_distances)
    free = np.argwhere(occ == 0)
    cells = [tuple(int(v) for v in free[i]) for i in rng.integers(len(free), size=200)]
    buf = np.empty(66)

    def observe_batch(k):
        def run():
            for c in cells:
                k.observe_into(occ, dist, c, scene.end, 0, buf)
            return buf.copy()
        return run

    jobs = {
        "axis_distances": lambda k: (lambda: k.axis_distances(occ)),
        "reachable": lambda k: (lambda: k.reachable(occ, scene.start, scene.end)),
        "observe x200": observe_batch,
    }
    for cs in TABLE_CONSTRAINTS:
        w = cs.unit_weights()
        for name, h in (("dijkstra", False), ("astar", True)):
            jobs[f"{name} {{{cs.label}}}"] = (
                lambda w=w, h=h: lambda k: (lambda: k.search(occ, md, scene.start, scene.end, *w, h))
            )()
    return jobs


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenes", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--dims", default="50,50,28", help="room size x,y,z in cells")
    args = ap.parse_args()
    if "cython" not in kernels.available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    py, cy = kernels.get("python"), kernels.get("cython")
    dims = tuple(int(v) for v in args.dims.split(","))
    cfg = SceneConfig.with_dims(dims)
    totals = {}
    rng = np.random.default_rng(0)
    for i in range(args.scenes):
        scene = generate_scene(derive_seed(0, i), cfg)
        for name, make in workloads(scene, rng).items():
            t_py, out_py = best_of(make(py), args.repeat)
            t_cy, out_cy = best_of(make(cy), args.repeat)
            if isinstance(out_py, tuple):
                same = out_py[1:] == out_cy[1:] and np.array_equal(out_py[0], out_cy[0])
            else:
                same = np.array_equal(out_py, out_cy)
            if not same:
                raise SystemExit(f"backends disagree on {name}")
            a, b = totals.get(name, (0.0, 0.0))
            totals[name] = (a + t_py, b + t_cy)
    print(f"room {dims}, {args.scenes} scenes, best of {args.repeat}")
    print(f"{'kernel':<22}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, (t_py, t_cy) in totals.items():
        n = args.scenes
        print(f"{name:<22}{t_py / n * 1e3:>12.2f}{t_cy / n * 1e3:>12.3f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
