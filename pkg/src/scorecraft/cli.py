"""Command-line entry point.

Exit codes: 0 success, 1 gradient check or evaluation failure, 2 usage or
config error, 3 divergence, 4 unreadable checkpoint.

``SCORECRAFT_THREADS`` caps the BLAS/OpenMP thread pools; it must be set
before numpy loads, so the heavy imports below happen inside the commands.
"""

import argparse
import json
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads():
    n = os.environ.get("SCORECRAFT_THREADS")
    if not n:
        return
    if not n.isdigit() or int(n) < 1:
        raise SystemExit(f"error: SCORECRAFT_THREADS must be a positive integer, got {n!r}")
    for var in THREAD_VARS:
        os.environ[var] = n


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


class _Abort(Exception):
    """Raised by helpers to end a command with an exit code already reported."""

    def __init__(self, code):
        super().__init__(code)
        self.code = code


def cmd_run(args):
    from .config import ConfigError, load_config
    from .pipeline import DivergenceError, run_experiment

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_updates(seed=args.seed)
    except ConfigError as err:
        return _fail(2, str(err))
    except (OSError, ValueError) as err:
        return _fail(2, f"cannot read config {args.config}: {err}")
    try:
        summary, _ = run_experiment(cfg, args.out, force=args.force)
    except FileExistsError as err:
        return _fail(2, str(err))
    except DivergenceError as err:
        return _fail(3, f"{err}; last good checkpoint kept in {os.path.join(args.out, 'checkpoints')}")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_gradcheck(args):
    from .gradcheck import COMPONENTS, run_suite

    names = COMPONENTS if args.component == "all" else (args.component,)
    failed = []
    for name in names:
        for res in run_suite(name, args.seed):
            print(res.line())
            if not res.passed:
                failed.append(f"{res.suite}/{res.name}")
    if failed:
        return _fail(1, "tolerance exceeded in " + ", ".join(failed))
    return 0


def _load(path):
    from .io import CheckpointError
    from .pipeline import load_state

    try:
        return load_state(path)
    except CheckpointError as err:
        raise _Abort(_fail(4, str(err)))
    except OSError as err:
        raise _Abort(_fail(4, f"cannot read checkpoint {path}: {err}"))


def cmd_render(args):
    from .camera import Camera
    from .config import ExperimentConfig
    from .io import write_ppm
    from .pipeline import render_state

    state, cfg = _load(args.ckpt)
    cfg = cfg or ExperimentConfig()
    c = cfg.camera
    try:
        cam = Camera.orbit(args.azimuth, args.elevation,
                           c.default_distance if args.distance is None else args.distance,
                           c.default_fov if args.fov is None else args.fov,
                           cfg.image_size if args.size is None else args.size)
    except ValueError as err:
        return _fail(2, f"invalid camera: {err}")
    write_ppm(args.out, render_state(state, cam, args.mode, cfg).rgb)
    return 0


def cmd_export(args):
    from .pipeline import export_obj

    state, _ = _load(args.ckpt)
    try:
        mesh = export_obj(args.out, state)
    except ValueError as err:
        return _fail(1, str(err))
    print(f"wrote {mesh.vertices.shape[0]} vertices, {mesh.triangles.shape[0]} triangles to {args.out}")
    return 0


def cmd_gt_scene(args):
    from .config import ConfigError, parse_config
    from .pipeline import gt_state, save_state

    try:
        cfg = parse_config({"scene": {"name": args.scene}})
    except ConfigError as err:
        return _fail(2, str(err))
    save_state(args.out, gt_state(args.scene, args.resolution), cfg)
    return 0


def cmd_evaluate(args):
    from .config import ConfigError, load_config
    from .pipeline import compute_metrics, prepare

    state, cfg = _load(args.ckpt)
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except ConfigError as err:
            return _fail(2, str(err))
    if cfg is None:
        return _fail(2, "checkpoint carries no config; pass --config")
    gt, _, pack = prepare(cfg)
    metrics = compute_metrics(state, gt, cfg, pack)
    print(json.dumps({k: float(v) for k, v in metrics.items()}, indent=2, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="scorecraft", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run geometry and texture stages")
    r.add_argument("--config", required=True, help="YAML path or bundled config name")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", required=True)
    r.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    g.add_argument("--component", choices=("neus", "mesh", "losses", "priors", "all"), default="all")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    rd = sub.add_parser("render", help="render a checkpoint to a PPM image")
    rd.add_argument("--ckpt", required=True)
    rd.add_argument("--azimuth", type=float, required=True)
    rd.add_argument("--elevation", type=float, required=True)
    rd.add_argument("--out", required=True)
    rd.add_argument("--fov", type=float, default=None)
    rd.add_argument("--distance", type=float, default=None)
    rd.add_argument("--size", type=int, default=None)
    rd.add_argument("--mode", choices=("rgb", "normal-map", "lambertian"), default="rgb")
    rd.set_defaults(func=cmd_render)

    e = sub.add_parser("export", help="export a checkpoint's mesh as OBJ")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export)

    s = sub.add_parser("gt-scene", help="write a ground-truth scene checkpoint")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--resolution", type=int, default=64)
    s.set_defaults(func=cmd_gt_scene)

    m = sub.add_parser("evaluate", help="metrics of a checkpoint against its ground-truth scene")
    m.add_argument("--ckpt", required=True)
    m.add_argument("--config", default=None)
    m.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    _apply_threads()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Abort as err:
        return err.code


if __name__ == "__main__":
    sys.exit(main())
