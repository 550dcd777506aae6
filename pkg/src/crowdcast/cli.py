"""Command line interface: ingest, groups, destinations, predict, eval, plot.

Every subcommand accepts the shared parameter flags plus ``--config`` (a
``key = value`` text file), with explicit flags taking precedence over the
file and the file over built-in defaults. The fully resolved configuration
is written to ``run_config.txt`` in the output directory, in the same
format, so a run can be reproduced from its own output.

Exit codes: 0 success, 2 usage or validation error (including annotation
parse errors), 3 data error in otherwise well-formed input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .core import (
    Config,
    DataError,
    SceneGeometry,
    Trajectory,
    build_database,
    parse_scene,
    read_canonical_csv,
)
from .dynamics import ForceParams
from .evaluate import Window, run_experiment
from .grouping import build_intimacy_graph, extract_groups, make_group_state
from .ingest import Homography, ParseError, parse_obsmat, to_canonical
from .pipeline import known_window_tracks, predict_at_endtime
from .plotting import render_svg
from .retrieval import candidate_destinations

_CONFIG_FIELDS = {f.name: f.type for f in fields(Config)}
_FORCE_FIELDS = {f.name: f.type for f in fields(ForceParams)
                 if f.name not in ("mass", "radius", "neighborhood_range")}
_INT_FIELDS = {"known_time_steps", "predict_time_steps", "k_candidates",
               "min_overlap_frames", "substeps"}
_MODES = ("rigid", "seeded-jitter")

_FLAG_HELP = {
    "known_time_steps": "length of the known window in steps",
    "predict_time_steps": "length of the prediction horizon in steps",
    "k_candidates": "destinations retrieved from the database per group",
    "person_radius": "radius of a person in meters",
    "step_duration": "duration of one time step in seconds",
    "neighborhood_range": "interaction and query normalization range in meters",
    "person_mass": "mass of a person in kilograms",
    "intimate_distance": "distance bound for full closeness in meters",
    "personal_distance": "distance bound for half closeness in meters",
    "min_overlap_frames": "co-present frames required before scoring a pair",
    "direction_weight": "weight of the direction term in the retrieval score",
    "relaxation_time": "seconds to relax toward the desired velocity",
    "repulsion_strength": "pairwise repulsion amplitude",
    "repulsion_range": "pairwise repulsion decay length in meters",
    "obstacle_strength": "obstacle repulsion amplitude",
    "obstacle_range": "obstacle repulsion decay length in meters",
    "max_speed_factor": "speed cap as a multiple of the desired speed",
    "speed_floor": "minimum desired speed in m/s",
    "substeps": "integrator substeps per output step",
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    run = common.add_argument_group("run options")
    run.add_argument("--config", metavar="FILE",
                     help="key = value parameter file, overridden by flags")
    run.add_argument("--seed", type=int, metavar="N",
                     help="RNG seed for the seeded-jitter policy (default 0)")
    run.add_argument("--out", metavar="DIR", default=".",
                     help="output directory (default: current directory)")
    group = common.add_argument_group(
        "parameters (defaults in parentheses)")
    defaults = {**{f.name: f.default for f in fields(Config)},
                **{f.name: f.default for f in fields(ForceParams)}}
    for name in list(_CONFIG_FIELDS) + list(_FORCE_FIELDS):
        kind = int if name in _INT_FIELDS else float
        group.add_argument(_flag(name), dest=name, type=kind, metavar="X",
                           help=f"{_FLAG_HELP[name]} ({defaults[name]!r})")
    return common


def _parse_config_file(path: str) -> dict:
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _INT_FIELDS:
            out[key] = int(value)
        elif key in _CONFIG_FIELDS or key in _FORCE_FIELDS:
            out[key] = float(value)
        elif key == "seed":
            out[key] = int(value)
        elif key == "mode":
            if value not in _MODES:
                raise ValueError(f"{path}:{lineno}: unknown mode {value!r}")
            out[key] = value
        else:
            raise ValueError(f"{path}:{lineno}: unknown parameter {key!r}")
    return out


def _resolve(args) -> tuple:
    """Merge defaults, config file, and flags into Config/ForceParams."""
    merged = {}
    if args.config:
        merged.update(_parse_config_file(args.config))
    for name in list(_CONFIG_FIELDS) + list(_FORCE_FIELDS):
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    if args.seed is not None:
        merged["seed"] = args.seed
    mode = getattr(args, "mode", None)
    if mode is not None:
        merged["mode"] = mode
    seed = merged.pop("seed", 0)
    mode = merged.pop("mode", "rigid")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    cfg_kwargs = {k: v for k, v in merged.items() if k in _CONFIG_FIELDS}
    force_kwargs = {k: v for k, v in merged.items() if k in _FORCE_FIELDS}
    cfg = Config(**cfg_kwargs)
    params = ForceParams.from_config(cfg, **force_kwargs)
    return cfg, params, seed, mode


def _write_run_config(args, cfg: Config, params: ForceParams, seed: int,
                      mode: str, extra: dict) -> Path:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["# resolved run configuration; pass back via --config to reproduce"]
    for key, value in extra.items():
        lines.append(f"# {key}: {value}")
    values = {name: getattr(cfg, name) for name in _CONFIG_FIELDS}
    values.update({name: getattr(params, name) for name in _FORCE_FIELDS})
    values["seed"] = seed
    values["mode"] = mode
    for key in sorted(values):
        value = values[key]
        # the mode is a bare word, numbers round-trip through repr
        rendered = value if isinstance(value, str) else repr(value)
        lines.append(f"{key} = {rendered}")
    path = out_dir / "run_config.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _read_bytes(path: str) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise OSError(f"no such file: {path}")
    return p.read_bytes()


def _load_tracks(path: str, cfg: Config) -> list:
    return read_canonical_csv(_read_bytes(path), cfg.step_duration)


def _load_scene(args) -> SceneGeometry:
    if getattr(args, "scene", None):
        return parse_scene(_read_bytes(args.scene).decode("utf-8"))
    return SceneGeometry.empty()


def _traj_points(traj: Trajectory) -> list:
    return [[float(x), float(y)] for x, y in traj.positions]


def _jsonl(records: list) -> str:
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in records)


def _predictions_jsonl(preds: list, endtime: int) -> str:
    records = []
    for pred in preds:
        cands = []
        for c in pred.candidates:
            cands.append({
                "destination": [float(c.destination[0]), float(c.destination[1])],
                "provenance": c.provenance,
                "score": None if c.score is None else float(c.score),
                "group_trajectory": _traj_points(c.group_trajectory),
                "members": {m: _traj_points(t)
                            for m, t in sorted(c.member_trajectories.items())},
            })
        records.append({
            "endtime": endtime,
            "members": list(pred.members),
            "emotion": float(pred.emotion),
            "desired_speed": float(pred.desired_speed),
            "candidates": cands,
        })
    return _jsonl(records)


def cmd_ingest(args) -> int:
    cfg, params, seed, mode = _resolve(args)
    if args.fps <= 0:
        raise ValueError(f"--fps must be positive, got {args.fps}")
    data = _read_bytes(args.input)
    homography = Homography.identity()
    if args.homography:
        homography = Homography.from_text(_read_bytes(args.homography).decode())
    rows = parse_obsmat(data, column_map=args.columns)
    csv_bytes, summary = to_canonical(rows, homography, args.fps, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "canonical.csv").write_bytes(csv_bytes)
    _write_run_config(args, cfg, params, seed, mode,
                      {"subcommand": "ingest", "input": args.input,
                       "fps": args.fps})
    print(summary.describe())
    print(f"wrote {out_dir / 'canonical.csv'}")
    return 0


def cmd_groups(args) -> int:
    cfg, params, seed, mode = _resolve(args)
    tracks = _load_tracks(args.input, cfg)
    known = known_window_tracks(tracks, args.endtime, cfg)
    graph = build_intimacy_graph(known, cfg)
    by_id = {tr.agent_id: tr for tr in known}
    records = []
    for members in extract_groups(graph):
        state = make_group_state([by_id[m] for m in members], cfg)
        center = state.center_trajectory
        records.append({
            "members": list(members),
            "size": len(members),
            "emotion": float(state.emotion),
            "center_last": [float(center.positions[-1][0]),
                            float(center.positions[-1][1])],
        })
    text = _jsonl(records)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "groups.jsonl").write_text(text, encoding="utf-8")
    _write_run_config(args, cfg, params, seed, mode,
                      {"subcommand": "groups", "input": args.input,
                       "endtime": args.endtime})
    sys.stdout.write(text)
    return 0


def _database_tracks(args, cfg: Config, tracks: list) -> list:
    if getattr(args, "database", None):
        return _load_tracks(args.database, cfg)
    return tracks


def cmd_destinations(args) -> int:
    cfg, params, seed, mode = _resolve(args)
    tracks = _load_tracks(args.input, cfg)
    db = build_database(_database_tracks(args, cfg, tracks), cfg)
    known = known_window_tracks(tracks, args.endtime, cfg)
    graph = build_intimacy_graph(known, cfg)
    by_id = {tr.agent_id: tr for tr in known}
    records = []
    for members in extract_groups(graph):
        state = make_group_state([by_id[m] for m in members], cfg)
        cands = candidate_destinations(db, state.center_trajectory, cfg,
                                       exclude=state.members)
        records.append({
            "members": list(members),
            "emotion": float(state.emotion),
            "candidates": [{
                "destination": [float(c.destination[0]), float(c.destination[1])],
                "provenance": c.provenance,
                "score": None if c.score is None else float(c.score),
            } for c in cands],
        })
    text = _jsonl(records)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "destinations.jsonl").write_text(text, encoding="utf-8")
    _write_run_config(args, cfg, params, seed, mode,
                      {"subcommand": "destinations", "input": args.input,
                       "endtime": args.endtime})
    sys.stdout.write(text)
    return 0


def _prediction_layers(preds: list, known: list, tracks: list, endtime: int,
                       cfg: Config) -> list:
    layers = [("known", tr.positions) for tr in known]
    horizon_last = endtime + cfg.predict_time_steps
    by_id = {tr.agent_id: tr for tr in tracks}
    for pred in preds:
        for member in pred.members:
            tr = by_id[member]
            future = [tr.positions[i] for i, f in enumerate(tr.frames)
                      if endtime < f <= horizon_last]
            if len(future) >= 2:
                layers.append(("groundtruth", np.asarray(future)))
        for c in pred.candidates:
            layers.append(("predicted", c.group_trajectory.positions))
            layers.append(("destination", c.destination.reshape(1, 2)))
    return layers


def cmd_predict(args) -> int:
    cfg, params, seed, mode = _resolve(args)
    tracks = _load_tracks(args.input, cfg)
    scene = _load_scene(args)
    db = build_database(_database_tracks(args, cfg, tracks), cfg)
    preds = predict_at_endtime(tracks, args.endtime, db, cfg, params, scene,
                               mode=mode, seed=seed)
    if not preds:
        print(f"warning: no complete group at endtime {args.endtime}",
              file=sys.stderr)
    text = _predictions_jsonl(preds, args.endtime)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "predictions.jsonl").write_text(text, encoding="utf-8")
    _write_run_config(args, cfg, params, seed, mode,
                      {"subcommand": "predict", "input": args.input,
                       "endtime": args.endtime,
                       "scene": getattr(args, "scene", None),
                       "database": getattr(args, "database", None)})
    if args.plot:
        known = known_window_tracks(tracks, args.endtime, cfg)
        svg = render_svg(_prediction_layers(preds, known, tracks,
                                            args.endtime, cfg), scene)
        Path(args.plot).write_text(svg, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _auto_endtimes(tracks: list, cfg: Config, stride: int) -> list:
    first = min(int(tr.frames[0]) for tr in tracks)
    last = max(int(tr.frames[-1]) for tr in tracks)
    start = first + cfg.known_time_steps - 1
    return list(range(start, last + 1, stride))


def cmd_eval(args) -> int:
    cfg, params, seed, mode = _resolve(args)
    tracks = _load_tracks(args.input, cfg)
    scene = _load_scene(args)
    if args.endtimes:
        try:
            endtimes = [int(part) for part in args.endtimes.split(",") if part]
        except ValueError:
            raise ValueError(f"--endtimes must be comma-separated integers, "
                             f"got {args.endtimes!r}")
    else:
        stride = args.stride or cfg.predict_time_steps
        endtimes = _auto_endtimes(tracks, cfg, stride)
    if not endtimes:
        raise ValueError("no endtimes to evaluate")
    report = run_experiment(tracks, scene, [Window(e) for e in endtimes],
                            cfg, params, mode=mode, seed=seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = report.text_table()
    (out_dir / "results.txt").write_text(table, encoding="utf-8")
    (out_dir / "results.csv").write_bytes(report.csv_bytes())
    _write_run_config(args, cfg, params, seed, mode,
                      {"subcommand": "eval", "input": args.input,
                       "endtimes": ",".join(str(e) for e in endtimes)})
    sys.stdout.write(table)
    return 0


def cmd_plot(args) -> int:
    cfg, params, seed, mode = _resolve(args)
    tracks = _load_tracks(args.input, cfg)
    scene = _load_scene(args)
    layers = []
    for tr in tracks:
        if args.endtime is None:
            layers.append(("known", tr.positions))
            continue
        past = tr.positions[tr.frames <= args.endtime]
        future = tr.positions[tr.frames > args.endtime]
        if len(past):
            layers.append(("known", past))
        if len(future):
            layers.append(("groundtruth", future))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "plot.svg"
    path.write_text(render_svg(layers, scene), encoding="utf-8")
    _write_run_config(args, cfg, params, seed, mode,
                      {"subcommand": "plot", "input": args.input})
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="crowdcast",
        description="Group-aware pedestrian trajectory prediction: detect "
                    "groups, retrieve candidate destinations from history, "
                    "roll them out with a force model, and evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="convert a raw annotation file to canonical CSV")
    p.add_argument("input", help="raw annotation file (obsmat-style)")
    p.add_argument("--fps", type=float, default=2.5,
                   help="annotation frame rate in frames per second (2.5)")
    p.add_argument("--homography", metavar="FILE",
                   help="3x3 matrix file mapping annotation to world meters")
    p.add_argument("--columns", metavar="MAP",
                   help="column override as 'frame,id,x,y' indices")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("groups", parents=[common],
                       help="detect groups over the known window")
    p.add_argument("input", help="canonical CSV")
    p.add_argument("--endtime", type=int, required=True,
                   help="last frame of the known window")
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("destinations", parents=[common],
                       help="retrieve candidate destinations per group")
    p.add_argument("input", help="canonical CSV")
    p.add_argument("--endtime", type=int, required=True,
                   help="last frame of the known window")
    p.add_argument("--database", metavar="FILE",
                   help="canonical CSV to search (default: the input)")
    p.set_defaults(func=cmd_destinations)

    p = sub.add_parser("predict", parents=[common],
                       help="predict member trajectories at an endtime")
    p.add_argument("input", help="canonical CSV")
    p.add_argument("--endtime", type=int, required=True,
                   help="last frame of the known window")
    p.add_argument("--database", metavar="FILE",
                   help="canonical CSV to search (default: the input)")
    p.add_argument("--scene", metavar="FILE", help="obstacle geometry file")
    p.add_argument("--mode", choices=_MODES,
                   help="member deviation policy (rigid)")
    p.add_argument("--plot", metavar="FILE.svg",
                   help="also render the prediction to this SVG file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common],
                       help="run the windowed experiment and report metrics")
    p.add_argument("input", help="canonical CSV")
    p.add_argument("--endtimes", metavar="A,B,...",
                   help="explicit endtime list (default: auto-stride)")
    p.add_argument("--stride", type=int,
                   help="stride between auto endtimes (predict_time_steps)")
    p.add_argument("--scene", metavar="FILE", help="obstacle geometry file")
    p.add_argument("--mode", choices=_MODES,
                   help="member deviation policy (rigid)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common],
                       help="render tracks and obstacles to SVG")
    p.add_argument("input", help="canonical CSV")
    p.add_argument("--endtime", type=int,
                   help="split tracks into known/future at this frame")
    p.add_argument("--scene", metavar="FILE", help="obstacle geometry file")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
