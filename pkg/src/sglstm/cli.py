"""Command-line entry point: ``sglstm <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import backend as _backend
from . import evaluation as ev
from . import io
from . import navigation as nav
from . import nn
from . import predictors as P
from .core import (DEFAULT_STRIDE, OBS_LEN, Grouping, Scene, build_windows, observed_windows, split_by_start,
                   windows_from_groupings)
from .grouping import GroupingConfig, annotation_frames, auto_group
from .synth import SynthConfig, dense_fixture, synthesize


class CliError(Exception):
    pass


def _emit_error(kind: str, message: str, level: str = "error") -> None:
    sys.stderr.write(json.dumps({level: kind, "message": message}) + "\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("UsageError", message)
        raise SystemExit(2)


# ------------------------------------------------------------------ helpers

def _annotation_groupings(ann: io.GroupAnnotation, stride: int) -> List[Grouping]:
    """Annotation frames mark the last observed step of a window."""
    return [ann.grouping(f, f - (OBS_LEN - 1) * stride) for f in sorted(ann.frames)]


def _scene_groupings(scene: Scene, groups_path: Optional[str], stride: int) -> List[Grouping]:
    if groups_path:
        return _annotation_groupings(io.load_annotation(groups_path), stride)
    return auto_group(scene, GroupingConfig(), stride)


def _kind_windows(kind: P.PredictorKind, scene: Scene, groups_path: Optional[str], stride: int):
    if kind.grouped:
        return windows_from_groupings(scene, _scene_groupings(scene, groups_path, stride), stride)
    return build_windows(scene, Grouping.singletons(scene.tracks), stride)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_model(path: str):
    with open(path) as fh:
        doc = json.load(fh)
    params = nn.ParameterSet.from_json(doc)
    return P.PredictorKind.parse(params.config["kind"]), params


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in str(text).split(","))


# -------------------------------------------------------------- subcommands

def cmd_convert(a) -> int:
    camera = io.load_camera(a.camera) if a.camera else None
    scene = io.load_trajectories(a.input, a.format, camera, a.dt)
    meta = dict(scene.meta)
    meta.setdefault("provenance", io.provenance(a.argv))
    _write(a.output, io.dumps_jsonl(scene, meta))
    return 0


def cmd_synth(a) -> int:
    cfg = SynthConfig(n_pedestrians=a.n_pedestrians, group_size_weights=_floats(a.group_weights),
                      speed_range=(a.speed_min, a.speed_max), jitter=a.jitter, path=a.path, seed=a.seed,
                      duration_steps=a.duration, fps=a.fps, stride=a.stride, formation=a.formation)
    scene, truth = synthesize(cfg)
    meta = dict(scene.meta)
    meta["provenance"] = io.provenance(a.argv)
    _write(a.output, io.dumps_jsonl(scene, meta))
    if a.groups_out:
        ann = io.GroupAnnotation.from_groupings([(f, truth) for f in scene.frames.tolist()],
                                                {"provenance": io.provenance(a.argv), "ground_truth": True})
        _write(a.groups_out, ann.to_json())
    return 0


def cmd_group(a) -> int:
    scene = io.read_jsonl(a.scene)
    cfg = GroupingConfig(a.max_pair_distance, a.max_speed_diff, a.max_heading_diff, a.min_persist)
    groupings = auto_group(scene, cfg, a.stride)
    ann = io.GroupAnnotation.from_groupings(annotation_frames(groupings, OBS_LEN, a.stride),
                                            {"provenance": io.provenance(a.argv), "stride": a.stride})
    _write(a.output, ann.to_json())
    return 0


def cmd_train(a) -> int:
    kind = P.PredictorKind.parse(a.kind)
    if kind is P.PredictorKind.LINEAR:
        raise CliError("the Linear predictor has no parameters to train")
    groups = a.groups or []
    if groups and len(groups) != len(a.data):
        raise CliError("--groups must be given once per data file")
    dataset = []
    for k, path in enumerate(a.data):
        scene = io.read_jsonl(path)
        dataset += split_by_start(_kind_windows(kind, scene, groups[k] if groups else None, a.stride))
    cfg = P.TrainConfig(epochs=a.epochs, batch_size=a.batch_size, lr=a.lr, seed=a.seed, clip_norm=a.clip_norm,
                        model=P.ModelConfig(hidden=a.hidden, embed=a.embed, extent=a.extent, cells=a.cells))
    params, log = P.train(kind, dataset, cfg)
    doc = params.to_json({"provenance": io.provenance(a.argv), "epochs": a.epochs, "lr": a.lr,
                          "batch_size": a.batch_size, "stride": a.stride})
    _write(a.output, json.dumps(doc, sort_keys=True) + "\n")
    if a.loss_csv:
        lines = [f"# {io.header_line(a.argv)}", "epoch,nll"] + [f"{e + 1},{v:.10g}" for e, v in enumerate(log)]
        _write(a.loss_csv, "\n".join(lines) + "\n")
    return 0


def cmd_predict(a) -> int:
    scene = io.read_jsonl(a.scene)
    if a.model:
        kind, params = _load_model(a.model)
    else:
        kind, params = P.PredictorKind.parse(a.kind), None
        if kind is not P.PredictorKind.LINEAR:
            raise CliError(f"{kind.label} needs --model")
    pairs = _kind_windows(kind, scene, a.groups, a.stride)
    windows = [w for w, _ in pairs]
    pred = P.predict_learned(kind, windows, params) if windows else P.ScenePrediction([], [])
    lines = [f"# {io.header_line(a.argv)}", "start_frame,ped_id,step,frame,x,y"]
    per = pred.per_person()
    for (start, pid) in sorted(per):
        for k, (x, y) in enumerate(per[(start, pid)]):
            frame = start + (OBS_LEN + k) * a.stride
            lines.append(f"{start},{pid},{k + 1},{frame},{x:.6f},{y:.6f}")
    _write(a.output, "\n".join(lines) + "\n")
    return 0


def read_predictions(path: str) -> Dict[tuple, np.ndarray]:
    rows: Dict[tuple, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header != ["start_frame", "ped_id", "step", "frame", "x", "y"]:
            raise io.FormatError("unexpected predictions header", path, None)
        for ln, rec in enumerate(reader, 2):
            try:
                start, pid, step, frame = (int(v) for v in rec[:4])
                x, y = float(rec[4]), float(rec[5])
            except (ValueError, IndexError):
                raise io.FormatError(f"bad prediction row {rec!r}", path, ln) from None
            rows.setdefault((start, pid), []).append((step, frame, x, y))
    return {k: sorted(v) for k, v in rows.items()}


def cmd_eval(a) -> int:
    if a.groups:
        if not a.truth_groups:
            raise CliError("--groups needs --truth-groups")
        pred = io.load_annotation(a.groups)
        truth = io.load_annotation(a.truth_groups)
        rep = ev.grouping_recovery({f: [g.member_ids for g in gs] for f, gs in pred.frames.items()},
                                   {f: [g.member_ids for g in gs] for f, gs in truth.frames.items()})
        text = f"# {io.header_line(a.argv)}\n" + rep.to_csv()
        _write(a.output, text)
        return 0
    if not (a.predictions and a.truth):
        raise CliError("eval needs --predictions with --truth, or --groups with --truth-groups")
    preds = read_predictions(a.predictions)
    scene = io.read_jsonl(a.truth)
    pred_xy, truth_xy = {}, {}
    for key, rows in preds.items():
        pred_xy[key] = np.array([[x, y] for _, _, x, y in rows])
        tr = scene.tracks.get(key[1])
        truth_xy[key] = tr.positions_at([f for _, f, _, _ in rows]) if tr is not None else None
    rep = ev.metric_report(pred_xy, truth_xy)
    sq = ev.ade(pred_xy, truth_xy, squared=True)
    lines = [f"# {io.header_line(a.argv)}", "metric,value",
             f"ade,{rep.ade:.6f}", f"ade_squared,{sq:.6f}", f"fde,{rep.fde:.6f}",
             f"count,{rep.count}", f"excluded,{len(rep.excluded)}"]
    _write(a.output, "\n".join(lines) + "\n")
    if a.table and a.output != "-":
        sys.stdout.write(ev.format_table({a.label: {a.dataset: (rep.ade, rep.fde)}}, [a.dataset]))
    return 0


def bench_methods(scene: Scene, grouping: Grouping, seed: int = 0, stride: int = DEFAULT_STRIDE,
                  model: P.ModelConfig = P.ModelConfig(), backend_name: Optional[str] = None):
    """Zero-argument scene-prediction callables in runtime-table order.

    Every learned model uses freshly initialised weights; runtime does not
    depend on the weight values. Grouping is precomputed.
    """
    start = int(scene.frames[0])
    methods = {}
    for label in ev.RUNTIME_ORDER:
        kind = P.PredictorKind.parse(label)
        params = None if kind is P.PredictorKind.LINEAR else P.init_params(kind, model, seed)
        g = grouping if kind.grouped else Grouping.singletons(scene.tracks)

        def run(kind=kind, params=params, g=g):
            windows = observed_windows(scene, g, start, stride)
            return P.predict_learned(kind, windows, params, backend_name).n_entities
        methods[label] = run
    return methods


def cmd_bench(a) -> int:
    if a.scene:
        scene = io.read_jsonl(a.scene)
        grouping = _scene_groupings(scene, a.groups, a.stride)
        start = int(scene.frames[0])
        grouping = next((g for g in grouping if g.window_start_frame == start), Grouping.singletons(scene.tracks))
    else:
        scene, grouping = dense_fixture(a.n_groups, a.group_size, a.seed, stride=a.stride)
    methods = bench_methods(scene, grouping, a.seed, a.stride, backend_name=a.backend)
    g = grouping.restricted(scene.tracks)
    n_ped = len(scene.tracks)
    grouped = sum(len(m) for m in g.assignments.values() if len(m) > 1)
    rep = ev.bench(methods, n_ped, grouped / n_ped if n_ped else 0.0, len(g.assignments), a.reps, a.warmup)
    _write(a.output, f"# {io.header_line(a.argv)} | backend {a.backend or _backend.BACKEND}\n" + rep.to_csv())
    return 0


def cmd_simulate(a) -> int:
    if a.scenario:
        with open(a.scenario) as fh:
            try:
                sc = nav.scenario_from_dict(json.load(fh))
            except json.JSONDecodeError as e:
                raise io.FormatError(e.msg, a.scenario, e.lineno) from None
    elif a.canonical:
        sc = nav.CANONICAL[a.canonical]()
    else:
        raise CliError("simulate needs a scenario file or --canonical")
    from dataclasses import replace
    sc = replace(sc, seed=a.seed, noise=a.noise if a.noise is not None else sc.noise)
    predictor = None
    group_aware = not a.no_groups
    if a.model:
        kind, params = _load_model(a.model)
        group_aware = group_aware and kind.grouped
        predictor = lambda windows: P.predict_learned(kind, windows, params).horizons  # noqa: E731
    res = nav.simulate(sc, predictor, group_aware)
    header = io.header_line(a.argv)
    _write(a.output, nav.trace_csv(res, header))
    if a.svg:
        _write(a.svg, nav.trace_svg(sc, res, header=header))
    summary = {"reached": res.reached, "collided": res.collided, "steps": len(res.controls),
               "min_clearance": None if not np.isfinite(res.min_clearance) else round(res.min_clearance, 6)}
    if a.output != "-":
        sys.stdout.write(json.dumps(summary) + "\n")
    return 0 if not res.collided else 3


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sglstm", description="Group-aware trajectory prediction and crowd navigation.")
    p.add_argument("--version", action="version", version=f"sglstm {__version__}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="flat JSON file of option defaults")
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE, help="frame units per model step")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("convert", help="ethucy / mot15 / jsonl to canonical jsonl")
    s.add_argument("input")
    s.add_argument("--format", choices=io.FORMATS, required=True)
    s.add_argument("--camera", help="camera JSON for mot15 rows without world coordinates")
    s.add_argument("--dt", type=float, help="seconds per frame unit")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("synth", help="synthetic group-structured scene")
    s.add_argument("-o", "--output", default="-")
    s.add_argument("--groups-out", help="write the ground-truth grouping annotation here")
    s.add_argument("--n-pedestrians", type=int, default=20)
    s.add_argument("--group-weights", default="0.3,0.3,0.25,0.15", help="relative frequency of sizes 1, 2, ...")
    s.add_argument("--speed-min", type=float, default=0.8)
    s.add_argument("--speed-max", type=float, default=1.6)
    s.add_argument("--jitter", type=float, default=0.05)
    s.add_argument("--path", choices=("straight", "arc"), default="straight")
    s.add_argument("--formation", choices=("fixed", "rotating"), default="fixed")
    s.add_argument("--duration", type=int, default=20, help="model steps")
    s.add_argument("--fps", type=float, default=30.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("group", help="auto-cluster pedestrians into groups")
    s.add_argument("scene")
    s.add_argument("-o", "--output", default="-")
    d = GroupingConfig()
    s.add_argument("--max-pair-distance", type=float, default=d.max_pair_distance)
    s.add_argument("--max-speed-diff", type=float, default=d.max_speed_diff)
    s.add_argument("--max-heading-diff", type=float, default=d.max_heading_diff)
    s.add_argument("--min-persist", type=int, default=d.min_persist_steps)
    s.set_defaults(func=cmd_group)

    s = sub.add_parser("train", help="train a learned predictor")
    s.add_argument("data", nargs="+", help="jsonl scenes")
    s.add_argument("--kind", required=True)
    s.add_argument("--groups", nargs="+", help="one annotation per data file (SG-LSTM); default auto-grouping")
    t, m = P.TrainConfig(), P.ModelConfig()
    s.add_argument("--epochs", type=int, default=t.epochs)
    s.add_argument("--batch-size", type=int, default=t.batch_size)
    s.add_argument("--lr", type=float, default=t.lr)
    s.add_argument("--clip-norm", type=float, default=t.clip_norm)
    s.add_argument("--hidden", type=int, default=m.hidden)
    s.add_argument("--embed", type=int, default=m.embed)
    s.add_argument("--extent", type=float, default=m.extent)
    s.add_argument("--cells", type=int, default=m.cells)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--loss-csv")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict t6..t10 for every window of a scene")
    s.add_argument("scene")
    s.add_argument("--model")
    s.add_argument("--kind", default="Linear", help="used when no model is given")
    s.add_argument("--groups")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", help="score predictions or grouping recovery")
    s.add_argument("--predictions")
    s.add_argument("--truth")
    s.add_argument("--groups")
    s.add_argument("--truth-groups")
    s.add_argument("--table", action="store_true", help="also print an ADE/FDE table")
    s.add_argument("--label", default="model")
    s.add_argument("--dataset", default="scene")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="median scene-prediction time per method")
    s.add_argument("--scene", help="jsonl scene; default is the dense fixture")
    s.add_argument("--groups")
    s.add_argument("--n-groups", type=int, default=20)
    s.add_argument("--group-size", type=int, default=3)
    s.add_argument("--reps", type=int, default=11)
    s.add_argument("--warmup", type=int, default=3)
    s.add_argument("--backend", choices=_backend.AVAILABLE)
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("simulate", help="drive the robot through a scenario")
    s.add_argument("scenario", nargs="?")
    s.add_argument("--canonical", choices=sorted(nav.CANONICAL))
    s.add_argument("--model")
    s.add_argument("--no-groups", action="store_true")
    s.add_argument("--noise", type=float)
    s.add_argument("-o", "--output", default="-")
    s.add_argument("--svg")
    s.set_defaults(func=cmd_simulate)
    return p


def _apply_config(parser: argparse.ArgumentParser, path: str) -> None:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise io.FormatError(e.msg, path, e.lineno) from None
    if not isinstance(cfg, dict):
        raise io.FormatError("config must be a flat JSON object", path)
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    subs = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)][0].choices.values()
    known = set()
    for p in [parser, *subs]:
        dests = {a.dest for a in p._actions}
        hits = {k: v for k, v in cfg.items() if k in dests and k != "config"}
        p.set_defaults(**hits)
        known |= set(hits)
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            _apply_config(parser, known.config)
        args = parser.parse_args(argv)
        args.argv = ["sglstm", *argv]
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, cat, *rest: _emit_error(cat.__name__, str(msg), "warning")
            return args.func(args)
    except SystemExit:
        raise
    except (CliError, ValueError, OSError, KeyError, P.TrainingDiverged) as e:
        _emit_error(type(e).__name__, str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
