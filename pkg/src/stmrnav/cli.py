"""Command line entry point.

Three subcommands:

* ``run`` executes an episode suite against a scene and writes per-step
  traces, a results CSV, and a summary table.
* ``dump-map`` renders one step of a saved trace, either as the matrix
  plus an ASCII top-down map or as a portable graymap image.
* ``validate`` schema-checks scene and episode files and cross-checks
  episodes against the scene bounds.

Exit codes: 0 success, 1 data error (unreadable or invalid files),
2 usage error (bad flags or configuration values).
"""

from __future__ import annotations

import argparse
import glob
import json
import math
import os
import sys
from dataclasses import fields

from . import evaluation, planner, world
from .errors import SceneParseError, StmrNavError

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2

_CONFIG_KEYS = {
    "tau", "r", "matrix_size", "voxel_size", "max_range", "mount",
    "margin", "requery_limit", "max_unparseable", "plan_mode",
    "map_format", "success_radius", "max_actions",
}


def _load_loop_config(path, overrides) -> evaluation.LoopConfig:
    values = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ValueError(
                f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    valid = {f.name for f in fields(evaluation.LoopConfig)}
    config = evaluation.LoopConfig(
        **{k: v for k, v in values.items() if k in valid})
    config.validate()
    return config


def _expand_episode_paths(patterns) -> list[str]:
    paths = []
    for pattern in patterns:
        hits = sorted(glob.glob(pattern))
        if hits:
            paths.extend(hits)
        else:
            paths.append(pattern)  # literal path; load will fail loudly
    seen = set()
    unique = []
    for p in paths:
        if p not in seen:
            seen.add(p)
            unique.append(p)
    return unique


def _backend_factory(spec: str, seed: int):
    """Resolve a backend spec into a per-episode factory."""
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        if not arg:
            raise ValueError("scripted backend needs a path")
        if os.path.isdir(arg):
            def factory(episode, index):
                path = os.path.join(arg, f"{episode.episode_id}.txt")
                return planner.ScriptedBackend.from_file(path)
            return factory
        shared = planner.ScriptedBackend.from_file(arg)

        def factory(episode, index):
            return planner.ScriptedBackend(shared._responses)
        return factory
    if kind == "random":
        return lambda episode, index: planner.RandomBackend(seed + index)
    if kind == "echo":
        return lambda episode, index: planner.EchoBackend()
    if kind == "remote":
        if not arg:
            raise ValueError("remote backend needs an endpoint URL")
        backend = planner.RemoteBackend(endpoint=arg)
        return lambda episode, index: backend
    raise ValueError(f"unknown backend spec {spec!r}")


def _perceptor_factory(spec: str, scene: world.Scene):
    if spec == "oracle":
        return None
    if spec.startswith("degraded"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(
                "degraded perceptor spec is degraded:<drop-rate>:<seed>")
        rate = float(parts[1])
        base_seed = int(parts[2])
        from .perception import DegradedOraclePerceptor

        def factory(episode, index):
            return DegradedOraclePerceptor(scene.legend, drop_rate=rate,
                                           seed=base_seed + index)
        return factory
    raise ValueError(f"unknown perceptor spec {spec!r}")


def cmd_run(args) -> int:
    try:
        config = _load_loop_config(args.config, {
            "tau": args.tau,
            "r": args.r,
            "matrix_size": args.matrix_size,
            "max_actions": args.max_actions,
            "plan_mode": args.plan_mode,
            "map_format": args.map_format,
        })
        if args.parallel < 1:
            raise ValueError("--parallel must be at least 1")
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_DATA

    try:
        scene = world.load_scene(args.scene)
        episode_paths = _expand_episode_paths(args.episodes)
        episodes = [world.load_episode(p) for p in episode_paths]
    except (SceneParseError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not episodes:
        print("no episodes to run", file=sys.stderr)
        return EXIT_USAGE

    try:
        backend_factory = _backend_factory(args.backend, args.seed)
        perceptor_factory = _perceptor_factory(args.perceptor, scene)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        results = evaluation.run_suite(
            scene, episodes, backend_factory, config=config,
            perceptor_factory=perceptor_factory, parallel=args.parallel,
            out_dir=args.out)
    except (StmrNavError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_DATA

    summary = evaluation.aggregate(results)
    sys.stdout.write(evaluation.format_summary(summary))
    if args.out:
        print(f"traces and results written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# dump-map
# ---------------------------------------------------------------------------

def _parse_snapshot(text: str):
    cell_size = None
    legend = {}
    origin = (0, 0)
    size = (0, 0)
    labels: list[list[int]] = []
    trajectory: list[list[int]] = []
    section = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "cell_size":
            cell_size = float(parts[1])
        elif parts[0] == "legend":
            legend[int(parts[1])] = parts[2]
        elif parts[0] == "origin":
            origin = (int(parts[1]), int(parts[2]))
        elif parts[0] == "size":
            size = (int(parts[1]), int(parts[2]))
        elif parts[0] == "labels":
            section = labels
        elif parts[0] == "trajectory":
            section = trajectory
        elif section is not None:
            section.append([int(v) for v in parts])
    return cell_size, legend, origin, size, labels, trajectory


def _ascii_map(cell_size, origin, size, labels, trajectory, uav_xy) -> str:
    ncols, nrows = size
    if not nrows:
        return "(map empty)\n"
    ui = math.floor(uav_xy[0] / cell_size) - origin[0]
    uj = math.floor(uav_xy[1] / cell_size) - origin[1]
    out = []
    for r in range(nrows):       # row 0 of the snapshot is northernmost
        j = nrows - 1 - r
        row_chars = []
        for i in range(ncols):
            if (i, j) == (ui, uj):
                row_chars.append("@")
            elif trajectory and trajectory[r][i]:
                row_chars.append("*")
            else:
                lab = labels[r][i]
                if lab == 0:
                    row_chars.append(".")
                elif 0 < lab <= 9:
                    row_chars.append(str(lab))
                else:
                    row_chars.append("+")
        out.append("".join(row_chars))
    return "\n".join(out) + "\n"


def _pgm_map(legend, size, labels, trajectory) -> str:
    ncols, nrows = size
    max_id = max((lid for lid in legend if lid > 0), default=1)
    lines = ["P2", f"{ncols} {nrows}", "255"]
    for r in range(nrows):
        row = []
        for i in range(ncols):
            if trajectory and trajectory[r][i]:
                row.append(255)
            else:
                lab = labels[r][i]
                row.append(0 if lab <= 0 else (lab * 200) // max_id + 40)
        lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def cmd_dump_map(args) -> int:
    step_dir = os.path.join(args.trace, f"step_{args.step}")
    if not os.path.isdir(step_dir):
        print(f"no step {args.step} under {args.trace}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with open(os.path.join(step_dir, "matrix.txt"), encoding="utf-8") as f:
            matrix_text = f.read()
        with open(os.path.join(step_dir, "map.txt"), encoding="utf-8") as f:
            snapshot = f.read()
        with open(os.path.join(step_dir, "pose.txt"), encoding="utf-8") as f:
            pose_vals = [float(v) for v in f.read().split()]
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_DATA

    cell_size, legend, origin, size, labels, trajectory = _parse_snapshot(
        snapshot)
    if cell_size is None:
        print("map snapshot is missing its cell_size", file=sys.stderr)
        return EXIT_DATA
    if args.format == "pgm":
        sys.stdout.write(_pgm_map(legend, size, labels, trajectory))
    else:
        sys.stdout.write(matrix_text)
        if not matrix_text.endswith("\n"):
            sys.stdout.write("\n")
        sys.stdout.write("\n")
        sys.stdout.write(_ascii_map(cell_size, origin, size, labels,
                                    trajectory, pose_vals[:2]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _first_header(path) -> str:
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if line and not line.startswith("#"):
                return line
    return ""


def cmd_validate(args) -> int:
    violations = []
    scene = None
    episodes = []
    for path in args.paths:
        try:
            header = _first_header(path)
        except OSError as exc:
            violations.append(f"{path}: unreadable ({exc})")
            continue
        try:
            if header == "stmr-scene v1":
                parsed = world.load_scene(path)
                if scene is None:
                    scene = parsed
            elif header == "stmr-episode v1":
                episodes.append((path, world.load_episode(path)))
            else:
                violations.append(
                    f"{path}: unrecognized header {header!r}")
        except SceneParseError as exc:
            violations.append(f"{path}: {exc}")
        except OSError as exc:
            violations.append(f"{path}: unreadable ({exc})")

    if scene is not None:
        ext_x, ext_y = scene.extent
        for path, ep in episodes:
            points = [("start", (ep.start.x, ep.start.y, ep.start.z)),
                      ("goal", tuple(ep.goal))]
            for name, (x, y, z) in points:
                if not (0 <= x < ext_x and 0 <= y < ext_y):
                    violations.append(
                        f"{path}: {name} ({x:g}, {y:g}) outside scene "
                        f"bounds {ext_x:g} x {ext_y:g}")
                elif z <= 0:
                    violations.append(
                        f"{path}: {name} altitude {z:g} is not above "
                        "ground")

    for v in violations:
        print(v)
    print(f"{len(violations)} violations")
    return EXIT_OK if not violations else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stmrnav",
        description="Matrix-prompt aerial navigation: run suites, "
                    "inspect traces, validate data files.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an episode suite")
    run.add_argument("--scene", required=True)
    run.add_argument("--episodes", required=True, nargs="+",
                     help="episode files or globs")
    run.add_argument("--backend", default="echo",
                     help="echo | random | scripted:<file-or-dir> | "
                          "remote:<url>")
    run.add_argument("--perceptor", default="oracle",
                     help="oracle | degraded:<drop-rate>:<seed>")
    run.add_argument("--out", default=None,
                     help="directory for traces, CSV, and summary")
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--config", default=None,
                     help="JSON file of loop settings")
    run.add_argument("--tau", type=float, default=None)
    run.add_argument("--r", type=float, default=None)
    run.add_argument("--matrix-size", type=int, default=None,
                     dest="matrix_size")
    run.add_argument("--max-actions", type=int, default=None,
                     dest="max_actions")
    run.add_argument("--plan-mode", choices=("state", "stateless"),
                     default=None, dest="plan_mode")
    run.add_argument("--map-format", choices=("stmr", "topo", "metric"),
                     default=None, dest="map_format")
    run.set_defaults(func=cmd_run)

    dump = sub.add_parser("dump-map", help="render one step of a trace")
    dump.add_argument("--trace", required=True,
                      help="episode trace directory (<out>/<episode-id>)")
    dump.add_argument("--step", required=True, type=int)
    dump.add_argument("--format", choices=("ascii", "pgm"),
                      default="ascii")
    dump.set_defaults(func=cmd_dump_map)

    val = sub.add_parser("validate", help="schema-check data files")
    val.add_argument("paths", nargs="+")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
