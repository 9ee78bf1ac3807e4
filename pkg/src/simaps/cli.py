"""Command-line entry point: ``simap {synth,build,nav,eval,inspect}``.

Exit codes: 0 success, 2 bad input (files, configs, programs), 3 runtime
failure (unreachable goals and other navigation errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import simap as simap_io
from .config import BuildOptions, RunConfig, dump_config, load_config
from .episodes import Episode, corner_starts, load_episodes, run_episode, save_episodes, standard_suite
from .errors import (
    ConfigError,
    ConfigMismatch,
    DatasetError,
    FormatError,
    LabelMismatch,
    NavError,
    PlacementInfeasible,
    ProgramError,
    SIMapsError,
    UndefinedPQ,
)
from .evaluation import MetricsReport, instance_count_report, pq_by_class, success_rate
from .nav.dsl import parse_program
from .nav.executor import AgentState, execute
from .pipeline import BuildConfig, build_map
from .scene_io import VOID, load_dataset, write_dataset
from .semantic_grid import grid_from_labels
from .simap import SIMap, assemble
from .synthworld import (
    DEFAULT_INTRINSICS,
    SYNTH_CATALOG,
    SceneParams,
    SceneTruth,
    camera_trajectory,
    cc_baseline,
    generate_scene,
    render_dataset,
    scene_map_config,
    truth_map,
)

log = logging.getLogger("simaps")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
_INPUT_ERRORS = (DatasetError, FormatError, ProgramError, ConfigError, ConfigMismatch,
                 PlacementInfeasible, LabelMismatch, UndefinedPQ)


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = replace(cfg, build=replace(cfg.build, threads=args.threads))
    if getattr(args, "k_merge", None) is not None:
        cfg = replace(cfg, merge=replace(cfg.merge, k_percent=args.k_merge))
    if getattr(args, "threshold", None) is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, tau=args.threshold))
    if getattr(args, "void_navigable", False):
        cfg = replace(cfg, nav=replace(cfg.nav, void_navigable=True))
    return cfg


def _load_map(path: str, cfg: RunConfig) -> SIMap:
    try:
        return simap_io.load(path, cfg.map)
    except OSError as e:
        raise CliError(f"cannot read map {path}: {e.strerror}") from None


def _cc_relabel(m: SIMap, min_cells: int) -> SIMap:
    """Replace the instance layer with connected components of the class raster."""
    if m.catalog is None:
        raise CliError("--method cc needs the map's class catalog (.meta.json sidecar)")
    grid = grid_from_labels(m.cfg, m.class_id)
    return assemble(grid, cc_baseline(grid, m.catalog.thing_ids, min_cells), catalog=m.catalog)


def _stats_json(m: SIMap) -> dict:
    st = simap_io.stats(m)
    names = {}
    if m.catalog is not None:
        names = {c: m.catalog.get(c).name for c in st.classes if c in m.catalog}
    return {
        "shape": list(st.shape),
        "scale": m.cfg.scale,
        "origin": [m.cfg.origin_x, m.cfg.origin_y],
        "labeled_cells": st.labeled_cells,
        "classes": {names.get(c, str(c)): n for c, n in sorted(st.classes.items())},
        "instances": {names.get(c, str(c)): n for c, n in sorted(st.instances.items())},
    }


# -- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    params = SceneParams(
        n_objects=args.n_objects, extent=(args.extent[0], args.extent[1]), min_gap=args.min_gap,
        mode="touching" if args.touching_pairs else "separated",
        touching_pairs=args.touching_pairs,
        classes=tuple(args.classes) if args.classes else SceneParams().classes,
    )
    scene = generate_scene(params, args.seed)
    poses = camera_trajectory(scene, args.frames, args.trajectory, args.seed)
    frames = render_dataset(scene, poses, DEFAULT_INTRINSICS, args.depth_noise, args.seed)
    out = args.out_dir
    write_dataset(out, DEFAULT_INTRINSICS, SYNTH_CATALOG, frames)
    with open(os.path.join(out, "scene.json"), "w") as fh:
        fh.write(scene.dumps() + "\n")
    mcfg = scene_map_config(scene)
    truth = truth_map(scene, mcfg)
    simap_io.save(truth.map, os.path.join(out, "truth.simap"),
                  {"uid_of": [[c, t, u] for (c, t), u in sorted(truth.uid_of.items())]})
    # a config that builds on the same grid as the truth map
    # floor lies below z_min and stays VOID in built maps, hence void_navigable
    run = replace(RunConfig(), map=mcfg, build=BuildOptions(auto_size=False),
                  nav=replace(RunConfig().nav, void_navigable=True))
    with open(os.path.join(out, "map.ini"), "w") as fh:
        fh.write(dump_config(run))
    classes = sorted({b.class_id for b in scene.boxes})
    episodes = standard_suite(truth, classes, corner_starts(scene.extent), max_rank=args.max_rank)
    save_episodes(episodes, os.path.join(out, "episodes.jsonl"))
    print(json.dumps({"objects": len(scene.boxes), "touching": [list(p) for p in scene.touching],
                      "frames": len(frames), "episodes": len(episodes)}, sort_keys=True))
    return EXIT_OK


def cmd_build(args) -> int:
    cfg = _run_config(args)
    try:
        ds = load_dataset(args.dataset, threads=cfg.build.threads)
    except OSError as e:
        raise CliError(f"cannot read dataset: {e}") from None
    b = cfg.build
    res = build_map(ds, BuildConfig(cfg.map, cfg.louvain, cfg.merge, b.auto_size, b.margin,
                                    b.keep_obs, b.threads))
    m = res.simap
    if args.method == "cc":
        m = _cc_relabel(m, cfg.merge.min_instance_cells)
    simap_io.save(m, args.out, {"method": args.method, "k_percent": cfg.merge.k_percent,
                                "frames": len(ds)})
    info = _stats_json(m)
    info["timings"] = {k: round(v, 4) for k, v in res.timings.items()}
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def cmd_nav(args) -> int:
    cfg = _run_config(args)
    m = _load_map(args.map, cfg)
    try:
        if args.program == "-":
            text = sys.stdin.read()
        else:
            with open(args.program) as fh:
                text = fh.read()
    except OSError as e:
        raise CliError(f"cannot read program {args.program}: {e.strerror}") from None
    prog = parse_program(text)
    heading = np.radians(args.heading) if args.degrees else args.heading
    traj = execute(prog, m, AgentState(args.x, args.y, float(heading)), cfg.nav)
    out = traj.to_jsonl()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    if traj.failed:
        print(f"error: {traj.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _truth(path: str, cfg: RunConfig) -> SceneTruth:
    m = _load_map(path, cfg)
    uid_of = {}
    mp = simap_io.meta_path(path)
    if os.path.isfile(mp):
        with open(mp) as fh:
            uid_of = {(c, t): u for c, t, u in json.load(fh).get("uid_of", [])}
    return SceneTruth(m, uid_of)


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    truth = _truth(args.truth, cfg)
    pred = _load_map(args.pred, cfg)
    if not pred.cfg.same_grid(truth.map.cfg):
        raise ConfigMismatch("prediction and truth use different map geometry")
    methods = ("si", "cc") if args.method == "both" else (args.method,)
    eps: list[Episode] = load_episodes(args.episodes) if args.episodes else []
    report = MetricsReport()
    thr = cfg.eval.iou_threshold
    for method in methods:
        m = _cc_relabel(pred, cfg.merge.min_instance_cells) if method == "cc" else pred
        report.counts[method] = instance_count_report(m, truth, iou_threshold=thr)
        report.pq[method] = pq_by_class(m, truth, iou_threshold=thr)
        if eps:
            results = [run_episode(e, m, truth, cfg.nav, cfg.eval.tau) for e in eps]
            report.success_rate[method] = success_rate(results)
            if args.verbose:
                for r in results:
                    print(f"[{method}] {'ok  ' if r.success else 'FAIL'} {r.command} {r.error or ''}",
                          file=sys.stderr)
    if len(methods) == 2:
        report.add_baseline_deltas("si", "cc")
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    print(report.table(), file=sys.stderr)
    return EXIT_OK


def palette(n: int, seed: int = 7) -> np.ndarray:
    """n distinct RGB colors; index 0 is black (background)."""
    rng = np.random.default_rng(seed)
    cols = [(0, 0, 0)]
    seen = {cols[0]}
    while len(cols) < n:
        c = tuple(int(v) for v in rng.integers(40, 256, 3))
        if c not in seen:
            seen.add(c)
            cols.append(c)
    return np.array(cols, dtype=np.uint8).reshape(-1, 3)


def write_ppm(path: str, index: np.ndarray, colors: np.ndarray) -> None:
    """Binary P6 pixmap; row 0 of the grid (lowest y) is drawn at the bottom."""
    rgb = colors[np.flipud(index)]
    h, w = index.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def raster_indices(m: SIMap):
    """Dense color indices for the class layer and the instance layer (0 = background)."""
    cls_ids = sorted(set(np.unique(m.class_id).tolist()) - {VOID})
    cls_idx = np.zeros(m.shape, dtype=np.int64)
    for k, c in enumerate(cls_ids, 1):
        cls_idx[m.class_id == c] = k
    inst_idx = np.zeros(m.shape, dtype=np.int64)
    for k, (c, t) in enumerate(m.instance_keys(), 1):
        inst_idx[m.footprint(c, t)] = k
    return cls_idx, inst_idx


def cmd_inspect(args) -> int:
    cfg = _run_config(args)
    m = _load_map(args.map, cfg)
    info = _stats_json(m)
    prefix = args.ppm or os.path.splitext(args.map)[0]
    cls_idx, inst_idx = raster_indices(m)
    write_ppm(prefix + "_classes.ppm", cls_idx, palette(int(cls_idx.max()) + 1))
    write_ppm(prefix + "_instances.ppm", inst_idx, palette(int(inst_idx.max()) + 1, seed=11))
    info["images"] = [prefix + "_classes.ppm", prefix + "_instances.ppm"]
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="simap", description="Semantic instance maps: build, navigate, evaluate.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic dataset with ground truth")
    s.add_argument("out_dir")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-objects", type=int, default=10)
    s.add_argument("--touching-pairs", type=int, default=0, help="same-class pairs sharing a face")
    s.add_argument("--classes", type=int, nargs="+")
    s.add_argument("--extent", type=float, nargs=2, default=(6.0, 6.0), metavar=("X", "Y"))
    s.add_argument("--min-gap", type=float, default=0.3)
    s.add_argument("--frames", type=int, default=60)
    s.add_argument("--trajectory", choices=("orbit", "sweep"), default="orbit")
    s.add_argument("--depth-noise", type=float, default=0.0)
    s.add_argument("--max-rank", type=int, help="largest n in generated nth-closest episodes (default: all)")
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("build", parents=[common], help="build an SI map from a dataset directory")
    b.add_argument("dataset")
    b.add_argument("out")
    b.add_argument("--threads", type=int)
    b.add_argument("--k-merge", type=float, help="K percent for the over-segmentation merge")
    b.add_argument("--method", choices=("si", "cc"), default="si")
    b.set_defaults(func=cmd_build)

    n = sub.add_parser("nav", parents=[common], help="execute a navigation program on a map")
    n.add_argument("map")
    n.add_argument("program", help="program file, or - for stdin")
    n.add_argument("--x", type=float, default=0.0)
    n.add_argument("--y", type=float, default=0.0)
    n.add_argument("--heading", type=float, default=0.0, help="radians (degrees with --degrees)")
    n.add_argument("--degrees", action="store_true")
    n.add_argument("--void-navigable", action="store_true", help="treat unobserved cells as free")
    n.add_argument("--out", help="trajectory JSON-lines file (default stdout)")
    n.set_defaults(func=cmd_nav)

    e = sub.add_parser("eval", parents=[common], help="PQ, instance counts and episode success")
    e.add_argument("pred")
    e.add_argument("truth")
    e.add_argument("--episodes", help="JSON-lines episode file")
    e.add_argument("--method", choices=("si", "cc", "both"), default="si",
                   help="cc re-derives instances by connected components first; "
                        "both reports the two and their deltas")
    e.add_argument("--threshold", type=float, help="success distance tau in meters")
    e.add_argument("--void-navigable", action="store_true")
    e.add_argument("--out", help="report JSON file (default stdout)")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", parents=[common], help="print stats and write PPM rasters")
    i.add_argument("map")
    i.add_argument("--ppm", help="output prefix for <prefix>_classes.ppm / _instances.ppm")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ProgramError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except _INPUT_ERRORS as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NavError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except SIMapsError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
