"""Command-line entry point: ``piperoute <subcommand> ...``.

Exit codes: 0 success, 1 domain failure (no path, scene generation
exhausted, DRL layout failed), 2 usage or configuration error. Failures print
one ``error: <kind>: <message>`` line to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import asdict, replace

from . import bench, render
from .errors import (ConfigError, FormatError, GenerationExhausted, InvalidPath, NoPath, ParseError,
                     PipeRouteError)
from .io import atomic_write
from .mdp import RewardWeights
from .planner import ConstraintSet, load_path, plan_astar, plan_dijkstra
from .policy import load_checkpoint
from .scene import SceneConfig, generate_scene, load_scene, save_scene
from .trainer import TrainConfig, smoke_config, train


class DomainFailure(PipeRouteError):
    """A well-formed request whose answer is 'no layout'."""


def _triple(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z integers, got {text!r}") from None
    if len(vals) != 3 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive integers, got {text!r}")
    return vals


def _dims_range(text):
    """``x,y,z`` or ``x,y,z:x,y,z``."""
    lo, _, hi = text.partition(":")
    return _triple(lo), _triple(hi) if hi else _triple(lo)


def _constraints(text):
    try:
        return ConstraintSet.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _constraint_list(text):
    return [_constraints(part) for part in text.split(";") if part.strip()]


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed out of u64 range: {text}")
    return v


def _positive(text):
    try:
        v = int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _scene_config(min_dims, max_dims):
    if min_dims is None and max_dims is None:
        return SceneConfig()
    min_dims = min_dims or max_dims
    max_dims = max_dims or min_dims
    if any(a > b for a, b in zip(min_dims, max_dims)):
        raise ConfigError(f"--min-dims {min_dims} exceeds --max-dims {max_dims}")
    cfg = SceneConfig.with_dims(min_dims, max_dims)
    try:
        cfg.check()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_gen_scene(args):
    scene = generate_scene(args.seed, _scene_config(args.min_dims, args.max_dims))
    save_scene(scene, args.out)


def _layout(scene, algo, cs, model):
    if algo == "dijkstra":
        return plan_dijkstra(scene, cs)
    if algo == "astar":
        return plan_astar(scene, cs)
    net = load_checkpoint(model, expected_layout=None)
    path = bench.drl_layout(scene, net, cs)
    if path is None:
        raise DomainFailure("DRL policy did not reach the end cell")
    return path


def cmd_route(args):
    scene = load_scene(args.scene)
    path = _layout(scene, args.algo, args.constraints, args.model)
    atomic_write(args.out, path.to_json())
    if args.render:
        atomic_write(args.render_out, render.render_layout(scene, path.cells, args.render))


def cmd_train(args):
    weights = RewardWeights()
    if args.reward_elbow is not None:
        weights = replace(weights, r_elbow=args.reward_elbow)
    base = smoke_config(seed=args.seed) if args.preset == "smoke" else TrainConfig(seed=args.seed)
    cfg = replace(base, feature_mask=tuple(args.mask_features), reward_weights=weights)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    for name in ("entropy_coef", "reward_scale", "hidden", "rollout_size", "minibatch"):
        if getattr(args, name) is not None:
            cfg = replace(cfg, **{name: getattr(args, name)})
    if args.timesteps is not None:
        cfg = replace(cfg, total_timesteps=args.timesteps)
    if args.scene_dims is not None:
        cfg = replace(cfg, scene_config=_scene_config(*args.scene_dims))
    if args.procs is not None:
        cfg = replace(cfg, procs=args.procs)
    if args.target_success is not None:
        cfg = replace(cfg, target_success=args.target_success)
    try:
        cfg.check()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def progress(row):
        if args.verbose:
            print(f"iter {row['iter']} steps {row['timesteps']} success {row['success_rate']:.3f} "
                  f"return {row['mean_return']:.1f} entropy {row['entropy']:.3f}", file=sys.stderr)

    res = train(cfg, checkpoint_path=args.out, log_path=args.log, progress=progress)
    print(f"episodes={res.episodes} success_rate={res.success_rate:.4f} timesteps={res.net.timesteps}")


def cmd_eval(args):
    scene = load_scene(args.scene)
    path = load_path(args.path)
    m = bench.path_metrics(scene, path.cells)
    buf = io.StringIO()
    row = asdict(m)
    writer = csv.DictWriter(buf, list(row), lineterminator="\n")
    writer.writeheader()
    writer.writerow(row)
    sys.stdout.write(buf.getvalue())


def cmd_bench(args):
    checkpoints = {}
    for label, attr in (("1", "model_1"), ("1,2", "model_12"), ("1,2,3", "model_123")):
        if getattr(args, attr):
            checkpoints[label] = getattr(args, attr)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    report = bench.run_benchmark(args.scenes, args.seed, algos, args.constraints, checkpoints,
                                 _scene_config(args.min_dims, args.max_dims))
    atomic_write(args.out, report.to_csv())
    sys.stdout.write(report.to_table())


def cmd_render(args):
    scene = load_scene(args.scene)
    path = load_path(args.path)
    atomic_write(args.out, render.render_layout(scene, path.cells, args.format))


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="piperoute", description="Building pipe routing on voxel scenes.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="generate a random scene")
    g.add_argument("--seed", type=_u64, required=True)
    g.add_argument("--min-dims", type=_triple)
    g.add_argument("--max-dims", type=_triple)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_scene)

    r = sub.add_parser("route", help="lay one pipe in a scene")
    r.add_argument("--scene", required=True)
    r.add_argument("--algo", choices=("dijkstra", "astar", "drl"), required=True)
    r.add_argument("--constraints", type=_constraints, default=ConstraintSet())
    r.add_argument("--model")
    r.add_argument("--out", required=True)
    r.add_argument("--render", choices=("svg", "ascii"))
    r.add_argument("--render-out")
    r.set_defaults(func=cmd_route)

    t = sub.add_parser("train", help="train a PPO routing policy")
    t.add_argument("--timesteps", type=_positive)
    t.add_argument("--seed", type=_u64, default=0)
    t.add_argument("--preset", choices=("default", "smoke"), default="default",
                   help="smoke: 20x20x15 scenes with tuned exploration settings")
    t.add_argument("--workers", type=_positive)
    t.add_argument("--hidden", type=_positive)
    t.add_argument("--rollout-size", type=_positive)
    t.add_argument("--minibatch", type=_positive)
    t.add_argument("--entropy-coef", type=float)
    t.add_argument("--reward-scale", type=float)
    t.add_argument("--procs", type=_positive)
    t.add_argument("--out", required=True)
    t.add_argument("--log")
    t.add_argument("--mask-features", type=lambda s: [v for v in s.split(",") if v], default=[])
    t.add_argument("--reward-elbow", type=float)
    t.add_argument("--scene-dims", type=_dims_range, help="x,y,z or x,y,z:x,y,z")
    t.add_argument("--target-success", type=float)
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="print path metrics as CSV")
    e.add_argument("--scene", required=True)
    e.add_argument("--path", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="compare planners and policies over seeded scenes")
    b.add_argument("--scenes", type=_positive, default=100)
    b.add_argument("--seed", type=_u64, default=0)
    b.add_argument("--algos", default="dijkstra,astar")
    b.add_argument("--constraints", type=_constraint_list, default=_constraint_list("1;1,2;1,2,3"))
    b.add_argument("--model-1")
    b.add_argument("--model-12")
    b.add_argument("--model-123")
    b.add_argument("--workers", type=_positive, default=1,
                   help="accepted for interface compatibility; layouts are timed single-stream")
    b.add_argument("--min-dims", type=_triple)
    b.add_argument("--max-dims", type=_triple)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("render", help="draw a routed scene")
    d.add_argument("--scene", required=True)
    d.add_argument("--path", required=True)
    d.add_argument("--format", choices=("svg", "ascii"), default="svg")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_render)
    return p


def _fail(kind, exc, code):
    msg = str(exc).replace("\n", " ")
    print(f"error: {kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "route":
        if args.algo == "drl" and not args.model:
            parser.error("--algo drl requires --model")
        if args.render and not args.render_out:
            parser.error("--render requires --render-out")
    if args.command == "train" and args.mask_features:
        from .observe import BLOCK_SLICES
        unknown = sorted(set(args.mask_features) - set(BLOCK_SLICES))
        if unknown:
            parser.error(f"--mask-features: unknown blocks {','.join(unknown)}")
    try:
        args.func(args)
    except (NoPath, GenerationExhausted, DomainFailure) as exc:
        return _fail(type(exc).__name__, exc, 1)
    except (ConfigError, ParseError, FormatError, InvalidPath) as exc:
        return _fail(type(exc).__name__, exc, 2)
    except FileNotFoundError as exc:
        return _fail("FileNotFound", exc.filename or exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
