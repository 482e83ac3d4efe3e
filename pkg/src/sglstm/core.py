"""Scenes, tracks, groupings and the 5-observed / 5-predicted windowing."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

OBS_LEN = 5
PRED_LEN = 5
SEQ_LEN = OBS_LEN + PRED_LEN

#: Default number of frame-index units per model step (30 fps -> 0.4 s).
DEFAULT_STRIDE = 12


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Track:
    """Positions of one pedestrian, at most one sample per frame."""

    ped_id: int
    frames: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        frames = _frozen(self.frames, np.int64).reshape(-1)
        xy = _frozen(self.xy, np.float64).reshape(-1, 2)
        if len(frames) != len(xy):
            raise ValueError(f"track {self.ped_id}: {len(frames)} frames but {len(xy)} positions")
        if len(frames) > 1 and np.any(np.diff(frames) <= 0):
            raise ValueError(f"track {self.ped_id}: frames must be strictly increasing")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "xy", xy)

    @classmethod
    def from_samples(cls, ped_id: int, samples: Iterable[Tuple[int, float, float]]) -> "Track":
        rows = sorted(samples)
        if not rows:
            return cls(ped_id, np.zeros(0, np.int64), np.zeros((0, 2)))
        arr = np.array(rows, dtype=np.float64)
        return cls(ped_id, arr[:, 0].astype(np.int64), arr[:, 1:3])

    def __len__(self):
        return len(self.frames)

    def position_map(self) -> Dict[int, np.ndarray]:
        return {int(f): self.xy[k] for k, f in enumerate(self.frames)}

    def positions_at(self, frames: Sequence[int]) -> Optional[np.ndarray]:
        """Positions at the given frames, or None if any frame is missing."""
        idx = np.searchsorted(self.frames, frames)
        if np.any(idx >= len(self.frames)):
            return None
        if np.any(self.frames[idx] != np.asarray(frames)):
            return None
        return self.xy[idx]


@dataclass(frozen=True)
class Scene:
    """Tracked pedestrians over a common frame base.

    ``dt`` is seconds per frame-index unit; a model step spans ``stride``
    such units, see :meth:`step_dt`.
    """

    frames: np.ndarray
    dt: float
    tracks: Mapping[int, Track]
    meta: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        frames = _frozen(self.frames, np.int64).reshape(-1)
        if len(frames) > 1 and np.any(np.diff(frames) <= 0):
            raise ValueError("scene frames must be strictly increasing")
        if not self.dt > 0:
            raise ValueError("scene dt must be positive")
        known = set(frames.tolist())
        for pid, tr in self.tracks.items():
            if pid != tr.ped_id:
                raise ValueError(f"track keyed {pid} has ped_id {tr.ped_id}")
            if not known.issuperset(tr.frames.tolist()):
                raise ValueError(f"track {pid} references frames outside the scene")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "tracks", dict(sorted(self.tracks.items())))

    @classmethod
    def from_rows(cls, rows: Iterable[Tuple[int, int, float, float]], dt: float = 1.0 / 30,
                  meta: Optional[dict] = None) -> "Scene":
        """Build from ``(frame, ped_id, x, y)`` rows."""
        per_ped: Dict[int, list] = {}
        frames = set()
        for f, pid, x, y in rows:
            per_ped.setdefault(int(pid), []).append((int(f), float(x), float(y)))
            frames.add(int(f))
        tracks = {}
        for pid, samples in per_ped.items():
            seen = set()
            for f, _, _ in samples:
                if f in seen:
                    raise ValueError(f"pedestrian {pid} has two samples in frame {f}")
                seen.add(f)
            tracks[pid] = Track.from_samples(pid, samples)
        return cls(np.array(sorted(frames), dtype=np.int64), dt, tracks, meta)

    def rows(self) -> List[Tuple[int, int, float, float]]:
        """``(frame, ped_id, x, y)`` rows sorted by frame then id."""
        out = []
        for pid, tr in self.tracks.items():
            for f, (x, y) in zip(tr.frames.tolist(), tr.xy.tolist()):
                out.append((f, pid, x, y))
        out.sort(key=lambda r: (r[0], r[1]))
        return out

    def step_dt(self, stride: int) -> float:
        return self.dt * stride

    def translated(self, dx: float, dy: float) -> "Scene":
        shift = np.array([dx, dy])
        tracks = {pid: Track(pid, tr.frames, tr.xy + shift) for pid, tr in self.tracks.items()}
        return Scene(self.frames, self.dt, tracks, self.meta)

    def positions_in_frame(self, frame: int) -> Dict[int, np.ndarray]:
        out = {}
        for pid, tr in self.tracks.items():
            k = np.searchsorted(tr.frames, frame)
            if k < len(tr.frames) and tr.frames[k] == frame:
                out[pid] = tr.xy[k]
        return out


@dataclass(frozen=True)
class Grouping:
    """Partition of pedestrian ids into groups, keyed by group id."""

    window_start_frame: int
    assignments: Mapping[int, FrozenSet[int]]

    def __post_init__(self):
        seen = set()
        clean = {}
        for gid, members in self.assignments.items():
            members = frozenset(int(m) for m in members)
            if not members:
                raise ValueError(f"group {gid} is empty")
            if seen & members:
                raise ValueError(f"pedestrians {sorted(seen & members)} appear in more than one group")
            seen |= members
            clean[int(gid)] = members
        object.__setattr__(self, "assignments", dict(sorted(clean.items())))

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[int]], window_start_frame: int = 0) -> "Grouping":
        """Canonical labelling: groups numbered by ascending smallest member id."""
        groups = sorted((frozenset(g) for g in groups), key=min)
        return cls(window_start_frame, {k: g for k, g in enumerate(groups)})

    @classmethod
    def singletons(cls, ped_ids: Iterable[int], window_start_frame: int = 0) -> "Grouping":
        return cls.from_groups([[p] for p in ped_ids], window_start_frame)

    @property
    def ped_ids(self) -> FrozenSet[int]:
        return frozenset().union(*self.assignments.values()) if self.assignments else frozenset()

    def group_of(self, ped_id: int) -> int:
        for gid, members in self.assignments.items():
            if ped_id in members:
                return gid
        raise KeyError(ped_id)

    def canonical(self) -> Tuple[Tuple[int, ...], ...]:
        """Label-free form, comparable across groupings."""
        return tuple(sorted(tuple(sorted(g)) for g in self.assignments.values()))

    def restricted(self, ped_ids: Iterable[int]) -> "Grouping":
        keep = set(ped_ids)
        groups = [g & keep for g in self.assignments.values()]
        groups += [[p] for p in keep - self.ped_ids]
        return Grouping.from_groups([g for g in groups if g], self.window_start_frame)


@dataclass(frozen=True)
class EntityWindow:
    """Five observed centroid positions of one entity (group or loner).

    ``members`` and ``member_offsets`` are aligned; offsets are taken from
    the centroid at the last observed step.
    """

    entity_id: int
    start_frame: int
    observed: np.ndarray
    members: Tuple[int, ...]
    member_offsets: np.ndarray

    def __post_init__(self):
        obs = _frozen(self.observed, np.float64)
        off = _frozen(self.member_offsets, np.float64).reshape(-1, 2)
        if obs.shape != (OBS_LEN, 2):
            raise ValueError(f"observed must have shape ({OBS_LEN}, 2), got {obs.shape}")
        if len(self.members) == 0 or len(self.members) != len(off):
            raise ValueError("member_offsets must be nonempty and aligned with members")
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "member_offsets", off)
        object.__setattr__(self, "members", tuple(int(m) for m in self.members))

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class GaussianStep:
    mu: Tuple[float, float]
    sigma: Tuple[float, float]
    rho: float

    def __post_init__(self):
        if not (self.sigma[0] > 0 and self.sigma[1] > 0):
            raise ValueError("sigma must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")


@dataclass(frozen=True)
class PredictionHorizon:
    """Positions for t6..t10; ``gaussians`` is an (5, 5) array of
    ``mu_x, mu_y, sigma_x, sigma_y, rho`` when the source is probabilistic."""

    positions: np.ndarray
    gaussians: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = _frozen(self.positions, np.float64)
        if pos.shape != (PRED_LEN, 2):
            raise ValueError(f"horizon must have {PRED_LEN} steps, got shape {pos.shape}")
        object.__setattr__(self, "positions", pos)
        if self.gaussians is not None:
            g = _frozen(self.gaussians, np.float64)
            if g.shape != (PRED_LEN, 5):
                raise ValueError("gaussians must have shape (5, 5)")
            object.__setattr__(self, "gaussians", g)

    @property
    def steps(self):
        if self.gaussians is None:
            return [tuple(p) for p in self.positions.tolist()]
        return [GaussianStep((g[0], g[1]), (g[2], g[3]), g[4]) for g in self.gaussians.tolist()]


def _member_positions(scene: Scene, members: Sequence[int], frames: Sequence[int]):
    out = []
    for pid in members:
        tr = scene.tracks.get(pid)
        if tr is None:
            return None
        p = tr.positions_at(frames)
        if p is None:
            return None
        out.append(p)
    return np.stack(out)  # (members, frames, 2)


def _windows_at(scene, grouping, start, stride, members_by_gid):
    frames = [start + k * stride for k in range(SEQ_LEN)]
    out = []
    for gid, members in members_by_gid:
        pos = _member_positions(scene, members, frames)
        if pos is None:
            continue
        centroid = pos.mean(axis=0)
        offsets = pos[:, OBS_LEN - 1] - centroid[OBS_LEN - 1]
        win = EntityWindow(gid, start, centroid[:OBS_LEN], tuple(members), offsets)
        out.append((win, PredictionHorizon(centroid[OBS_LEN:])))
    return out


def build_windows(scene: Scene, grouping: Grouping, stride: int = DEFAULT_STRIDE):
    """All (window, ground-truth horizon) pairs with every member present for
    10 consecutive model steps. Windows start at every scene frame.

    Pedestrians missing from ``grouping`` are treated as loners. An empty
    list is the "no windows" outcome.
    """
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    grouping = grouping.restricted(scene.tracks)
    members_by_gid = [(gid, sorted(m)) for gid, m in grouping.assignments.items()]
    out = []
    frame_set = set(scene.frames.tolist())
    for start in scene.frames.tolist():
        if start + (SEQ_LEN - 1) * stride not in frame_set:
            continue
        out.extend(_windows_at(scene, grouping, start, stride, members_by_gid))
    return out


def observed_windows(scene: Scene, grouping: Grouping, start_frame: int, stride: int = DEFAULT_STRIDE):
    """Observation-only windows (no future needed) starting at ``start_frame``."""
    grouping = grouping.restricted(scene.tracks)
    frames = [start_frame + k * stride for k in range(OBS_LEN)]
    out = []
    for gid, members in grouping.assignments.items():
        members = sorted(members)
        pos = _member_positions(scene, members, frames)
        if pos is None:
            continue
        centroid = pos.mean(axis=0)
        out.append(EntityWindow(gid, start_frame, centroid, tuple(members), pos[:, -1] - centroid[-1]))
    return sorted(out, key=lambda w: min(w.members))


def windows_from_groupings(scene: Scene, groupings: Iterable[Grouping], stride: int = DEFAULT_STRIDE):
    """Windows where each grouping applies only to its own window start frame."""
    out = []
    for g in groupings:
        g2 = g.restricted(scene.tracks)
        members_by_gid = [(gid, sorted(m)) for gid, m in g2.assignments.items()]
        out.extend(_windows_at(scene, g2, g.window_start_frame, stride, members_by_gid))
    return out


def split_by_start(pairs) -> List[list]:
    """Group window pairs into per-start-frame scene windows, ordered by start frame
    and, within a start frame, by smallest member id."""
    by_start: Dict[int, list] = {}
    for pair in pairs:
        by_start.setdefault(pair[0].start_frame, []).append(pair)
    return [sorted(v, key=lambda p: min(p[0].members)) for _, v in sorted(by_start.items())]


def per_person_predictions(window: EntityWindow, horizon: PredictionHorizon) -> Dict[int, np.ndarray]:
    """Member position = entity prediction + that member's offset at t5."""
    return {pid: horizon.positions + off for pid, off in zip(window.members, window.member_offsets)}


def person_truth(scene: Scene, window: EntityWindow, stride: int = DEFAULT_STRIDE) -> Dict[int, np.ndarray]:
    frames = [window.start_frame + k * stride for k in range(OBS_LEN, SEQ_LEN)]
    out = {}
    for pid in window.members:
        p = scene.tracks[pid].positions_at(frames)
        if p is not None:
            out[pid] = p
    return out
