"""Trajectory loaders, the jsonl interchange format, depth maps, camera files
and group annotations."""
from __future__ import annotations

import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .core import Grouping, Scene
from .geometry import CameraModel, DepthBoundedBox, localize

FORMATS = ("ethucy", "mot15", "jsonl")
ANNOTATION_VERSION = 1


class FormatError(ValueError):
    """Unparseable input; ``line`` is 1-based when known."""

    def __init__(self, msg: str, path: str = "", line: Optional[int] = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.path = path
        self.line = line


class OrderWarning(UserWarning):
    pass


def provenance(argv: Optional[Sequence[str]] = None) -> dict:
    """Tool version and the invocation that produced an artifact."""
    return {"tool": f"sglstm {__version__}", "argv": list(sys.argv if argv is None else argv)}


def header_line(argv: Optional[Sequence[str]] = None) -> str:
    p = provenance(argv)
    return f"{p['tool']} | {' '.join(p['argv'])}"


def _check_order(rows, path):
    frames = [r[0] for r in rows]
    if any(b < a for a, b in zip(frames, frames[1:])):
        warnings.warn(f"{path}: frames out of order, re-sorted", OrderWarning, stacklevel=3)


def _as_frame(tok: str, path: str, line: int) -> int:
    v = float(tok)
    if not math.isfinite(v) or v != int(v):
        raise FormatError(f"frame {tok!r} is not an integer", path, line)
    return int(v)


def _finite(vals, path, line):
    if not all(math.isfinite(v) for v in vals):
        raise FormatError("non-finite coordinate", path, line)


# ---------------------------------------------------------------- ethucy

def read_ethucy(path: str, dt: float = 1.0 / 30) -> Scene:
    rows = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            s = raw.strip()
            if not s or s.startswith("#"):
                continue
            tok = s.split()
            if len(tok) != 4:
                raise FormatError(f"expected 'frame ped_id x y', got {len(tok)} fields", path, ln)
            try:
                frame, pid = _as_frame(tok[0], path, ln), _as_frame(tok[1], path, ln)
                x, y = float(tok[2]), float(tok[3])
            except ValueError as e:
                if isinstance(e, FormatError):
                    raise
                raise FormatError(str(e), path, ln) from None
            _finite((x, y), path, ln)
            rows.append((frame, pid, x, y))
    _check_order(rows, path)
    return Scene.from_rows(rows, dt, {"source": "ethucy"})


# ----------------------------------------------------------------- mot15

def load_depth_map(path: str) -> np.ndarray:
    """Depth in metres: 16-bit PNG in millimetres, or CSV of floats in metres."""
    if path.lower().endswith(".png"):
        from PIL import Image
        with Image.open(path) as im:
            arr = np.asarray(im, dtype=np.float64)
        if arr.ndim != 2:
            raise FormatError("depth PNG must be single-channel", path)
        return arr / 1000.0
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as e:
        raise FormatError(str(e), path) from None


@dataclass(frozen=True)
class CameraFile:
    camera: CameraModel
    depth: np.ndarray = field(repr=False)
    centered: bool = False

    def depth_at(self, u: float, v: float) -> float:
        h, w = self.depth.shape
        col = min(max(int(u), 0), w - 1)
        row = min(max(int(v), 0), h - 1)
        return float(self.depth[row, col])


def load_camera(path: str) -> CameraFile:
    """JSON ``{fov, image_width, image_height, depth_map | depth, centered?}``;
    ``depth_map`` is resolved relative to the camera file."""
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(e.msg, path, e.lineno) from None
    try:
        cam = CameraModel(float(d["fov"]), float(d["image_width"]), float(d.get("image_height", 0.0)))
    except KeyError as e:
        raise FormatError(f"missing camera field {e}", path) from None
    if "depth_map" in d:
        depth = load_depth_map(os.path.join(os.path.dirname(path), d["depth_map"]))
    elif "depth" in d:
        depth = np.array([[float(d["depth"])]])
    else:
        raise FormatError("camera file needs 'depth_map' or 'depth'", path)
    return CameraFile(cam, depth, bool(d.get("centered", False)))


def read_mot15(path: str, camera: Optional[CameraFile] = None, dt: float = 1.0 / 30) -> Scene:
    """World (x, y) when both exceed -1, else the box centre localized with
    ``camera`` and its depth at that pixel."""
    rows = []
    with open(path, newline="") as fh:
        for ln, rec in enumerate(csv.reader(fh), 1):
            if not rec or not "".join(rec).strip() or rec[0].lstrip().startswith("#"):
                continue
            if len(rec) < 9:
                raise FormatError(f"expected at least 9 fields, got {len(rec)}", path, ln)
            try:
                frame, pid = _as_frame(rec[0], path, ln), _as_frame(rec[1], path, ln)
                left, top, w, h = (float(v) for v in rec[2:6])
                x, y = float(rec[7]), float(rec[8])
            except ValueError as e:
                if isinstance(e, FormatError):
                    raise
                raise FormatError(str(e), path, ln) from None
            if not (x > -1 and y > -1):
                if camera is None:
                    raise FormatError("world position absent and no camera file given", path, ln)
                u, v = left + w / 2, top + h / 2
                try:
                    p = localize(DepthBoundedBox((u, v), camera.depth_at(u, v)), camera.camera, camera.centered)
                except ValueError as e:
                    raise FormatError(str(e), path, ln) from None
                x, y = p.x_g, p.y_g
            _finite((x, y), path, ln)
            rows.append((frame, pid, x, y))
    _check_order(rows, path)
    return Scene.from_rows(rows, dt, {"source": "mot15"})


# ----------------------------------------------------------------- jsonl

def read_jsonl(path: str, dt: Optional[float] = None) -> Scene:
    """``{"frame", "id", "x", "y"}`` per line; an optional leading
    ``{"meta": {...}}`` line carries dt and provenance."""
    rows, meta = [], {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise FormatError(e.msg, path, ln) from None
            if not isinstance(obj, dict):
                raise FormatError("expected a JSON object", path, ln)
            if "meta" in obj:
                if rows:
                    raise FormatError("meta line must come first", path, ln)
                meta = dict(obj["meta"])
                continue
            try:
                frame, pid, x, y = obj["frame"], obj["id"], float(obj["x"]), float(obj["y"])
            except (KeyError, TypeError, ValueError) as e:
                raise FormatError(f"bad record: {e}", path, ln) from None
            if not (isinstance(frame, int) and isinstance(pid, int)):
                raise FormatError("frame and id must be integers", path, ln)
            _finite((x, y), path, ln)
            rows.append((frame, pid, x, y))
    _check_order(rows, path)
    if dt is None:
        dt = float(meta.get("dt", 1.0 / 30))
    meta.setdefault("dt", dt)
    return Scene.from_rows(rows, dt, meta)


def dumps_jsonl(scene: Scene, meta: Optional[dict] = None) -> str:
    meta = dict(scene.meta if meta is None else meta)
    meta["dt"] = scene.dt
    lines = [json.dumps({"meta": meta}, sort_keys=True, separators=(",", ":"))]
    for frame, pid, x, y in scene.rows():
        lines.append(json.dumps({"frame": int(frame), "id": int(pid), "x": float(x), "y": float(y)},
                                separators=(",", ":")))
    return "\n".join(lines) + "\n"


def save_jsonl(scene: Scene, path: str, meta: Optional[dict] = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_jsonl(scene, meta))


def load_trajectories(path: str, fmt: str, camera: Optional[CameraFile] = None,
                      dt: Optional[float] = None) -> Scene:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if fmt == "ethucy":
        return read_ethucy(path, 1.0 / 30 if dt is None else dt)
    if fmt == "mot15":
        return read_mot15(path, camera, 1.0 / 30 if dt is None else dt)
    if fmt == "jsonl":
        return read_jsonl(path, dt)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


# ------------------------------------------------------- group annotations

@dataclass(frozen=True)
class AnnotatedGroup:
    group_id: int
    member_ids: Tuple[int, ...]
    bbox: Optional[Tuple[float, float, float, float]] = None

    def __post_init__(self):
        if not self.member_ids:
            raise ValueError(f"group {self.group_id} has no members")
        if self.bbox is not None and (len(self.bbox) != 4 or self.bbox[2] <= 0 or self.bbox[3] <= 0):
            raise ValueError(f"group {self.group_id}: bbox must be (left, top, width, height) with positive size")


@dataclass
class GroupAnnotation:
    frames: Dict[int, List[AnnotatedGroup]]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for f, groups in self.frames.items():
            seen = set()
            for g in groups:
                if seen & set(g.member_ids):
                    raise ValueError(f"frame {f}: member ids shared between groups")
                seen |= set(g.member_ids)

    def grouping(self, frame: int, window_start_frame: Optional[int] = None) -> Grouping:
        groups = self.frames[frame]
        return Grouping(frame if window_start_frame is None else window_start_frame,
                        {g.group_id: frozenset(g.member_ids) for g in groups})

    @classmethod
    def from_groupings(cls, pairs: Iterable[Tuple[int, Grouping]], meta: Optional[dict] = None):
        frames = {}
        for frame, g in pairs:
            frames[int(frame)] = [AnnotatedGroup(int(gid), tuple(sorted(int(m) for m in members)))
                                  for gid, members in sorted(g.assignments.items())]
        return cls(frames, dict(meta or {}))

    def to_json(self) -> str:
        doc = {"format_version": ANNOTATION_VERSION, "meta": self.meta, "frames": [
            {"frame": f, "groups": [{"group_id": g.group_id, "member_ids": list(g.member_ids),
                                      "bbox": None if g.bbox is None else list(g.bbox)} for g in groups]}
            for f, groups in sorted(self.frames.items())]}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, path: str = "") -> "GroupAnnotation":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(e.msg, path, e.lineno) from None
        if doc.get("format_version") != ANNOTATION_VERSION:
            raise FormatError(f"unsupported annotation format_version {doc.get('format_version')!r}", path)
        frames = {}
        try:
            for fr in doc["frames"]:
                frames[int(fr["frame"])] = [
                    AnnotatedGroup(int(g["group_id"]), tuple(int(m) for m in g["member_ids"]),
                                   None if g.get("bbox") is None else tuple(float(v) for v in g["bbox"]))
                    for g in fr["groups"]]
            return cls(frames, doc.get("meta", {}))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad annotation: {e}", path) from None


def load_annotation(path: str) -> GroupAnnotation:
    with open(path) as fh:
        return GroupAnnotation.from_json(fh.read(), path)
