"""Rule-based group discovery from proximity, speed and heading."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import DEFAULT_STRIDE, Grouping, Scene, Track

#: Below this speed (m/s) heading is undefined and the heading test is skipped.
STATIONARY_SPEED = 0.1
#: Model steps spanned by the finite difference used for clustering velocities.
VELOCITY_LAG = 2


@dataclass(frozen=True)
class GroupingConfig:
    max_pair_distance: float = 2.0
    max_speed_diff: float = 0.5
    max_heading_diff: float = 0.5236
    min_persist_steps: int = 3

    def __post_init__(self):
        if min(self.max_pair_distance, self.max_speed_diff, self.max_heading_diff) <= 0:
            raise ValueError("grouping thresholds must be positive")
        if self.min_persist_steps < 1:
            raise ValueError("min_persist_steps must be >= 1")


def link_matrix(ids: Sequence[int], pos: np.ndarray, vel: np.ndarray, cfg: GroupingConfig) -> np.ndarray:
    """Symmetric boolean pairwise link matrix, diagonal False."""
    pos = np.asarray(pos, float).reshape(-1, 2)
    vel = np.asarray(vel, float).reshape(-1, 2)
    dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    speed = np.linalg.norm(vel, axis=1)
    close = dist <= cfg.max_pair_distance
    same_speed = np.abs(speed[:, None] - speed[None]) <= cfg.max_speed_diff
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (vel @ vel.T) / (speed[:, None] * speed[None])
    angle = np.arccos(np.clip(np.nan_to_num(cos, nan=1.0), -1.0, 1.0))
    moving = speed >= STATIONARY_SPEED
    heading_ok = (angle <= cfg.max_heading_diff) | ~(moving[:, None] & moving[None])
    links = close & same_speed & heading_ok
    np.fill_diagonal(links, False)
    return links


def components(ids: Sequence[int], links: np.ndarray, window_start_frame: int = 0) -> Grouping:
    n = len(ids)
    if n == 0:
        return Grouping(window_start_frame, {})
    _, labels = connected_components(coo_matrix(links.astype(np.int8)), directed=False)
    groups: Dict[int, List[int]] = {}
    for pid, lab in zip(ids, labels):
        groups.setdefault(int(lab), []).append(int(pid))
    return Grouping.from_groups(groups.values(), window_start_frame)


def cluster_frame(positions: Mapping[int, Sequence[float]], velocities: Mapping[int, Sequence[float]],
                  cfg: GroupingConfig = GroupingConfig(), window_start_frame: int = 0) -> Grouping:
    """Connected components of the pairwise link graph for one time step."""
    ids = sorted(positions)
    if not ids:
        return Grouping(window_start_frame, {})
    pos = np.array([positions[i] for i in ids], float)
    vel = np.array([velocities[i] for i in ids], float)
    return components(ids, link_matrix(ids, pos, vel, cfg), window_start_frame)


def _pairs(g: Grouping) -> set:
    out = set()
    for members in g.assignments.values():
        m = sorted(members)
        out.update((a, b) for i, a in enumerate(m) for b in m[i + 1:])
    return out


def persist_groups(steps: Sequence[Grouping], cfg: GroupingConfig = GroupingConfig(),
                   window_start_frame: int | None = None) -> Grouping:
    """Keep pairs co-grouped for at least ``min_persist_steps`` consecutive steps."""
    if window_start_frame is None:
        window_start_frame = steps[0].window_start_frame if steps else 0
    ids = sorted(frozenset().union(*(g.ped_ids for g in steps))) if steps else []
    run: Dict[Tuple[int, int], int] = {}
    best: Dict[Tuple[int, int], int] = {}
    for g in steps:
        linked = _pairs(g)
        for pair in list(run):
            if pair not in linked:
                run[pair] = 0
        for pair in linked:
            run[pair] = run.get(pair, 0) + 1
            best[pair] = max(best.get(pair, 0), run[pair])
    index = {pid: k for k, pid in enumerate(ids)}
    links = np.zeros((len(ids), len(ids)), bool)
    for (a, b), length in best.items():
        if length >= cfg.min_persist_steps:
            links[index[a], index[b]] = links[index[b], index[a]] = True
    return components(ids, links, window_start_frame)


def group_tracks(scene: Scene, grouping: Grouping) -> Dict[int, Track]:
    """Centroid track per group over the frames where every member is present."""
    out = {}
    for gid, members in grouping.assignments.items():
        maps = [scene.tracks[m].position_map() for m in sorted(members) if m in scene.tracks]
        if len(maps) != len(members):
            out[gid] = Track(gid, np.zeros(0, np.int64), np.zeros((0, 2)))
            continue
        common = sorted(set.intersection(*(set(m) for m in maps)))
        xy = np.array([np.mean([m[f] for m in maps], axis=0) for f in common]).reshape(-1, 2)
        out[gid] = Track(gid, np.array(common, np.int64), xy)
    return out


def step_states(scene: Scene, frame: int, stride: int = DEFAULT_STRIDE, lag: int = 1):
    """Positions and backward-difference velocities (m/s) over ``lag`` model
    steps, for pedestrians present at ``frame`` and ``lag`` steps earlier."""
    pos, vel = {}, {}
    step_dt = scene.step_dt(stride) * lag
    now = scene.positions_in_frame(frame)
    before = scene.positions_in_frame(frame - lag * stride)
    for pid, p in now.items():
        if pid in before:
            pos[pid] = p
            vel[pid] = (p - before[pid]) / step_dt
    return pos, vel


def auto_group(scene: Scene, cfg: GroupingConfig = GroupingConfig(), stride: int = DEFAULT_STRIDE,
               history: int = 5, lag: int = VELOCITY_LAG) -> List[Grouping]:
    """One persisted grouping per scene frame, using the ``history`` model steps
    ending at that frame. Each grouping is labelled with the frame at which a
    window ending its observation there would start. Frames without a full
    window of history before them are skipped."""
    out = []
    have = set(scene.frames.tolist())
    for frame in scene.frames.tolist():
        if frame - (history - 1) * stride not in have:
            continue
        steps = []
        ids = set()
        for k in range(history - 1, -1, -1):
            pos, vel = step_states(scene, frame - k * stride, stride, lag)
            steps.append(cluster_frame(pos, vel, cfg))
            ids |= set(pos)
        present = set(scene.positions_in_frame(frame))
        persisted = persist_groups(steps, cfg).restricted(ids & present) if steps else None
        if persisted is None:
            continue
        start = frame - (history - 1) * stride
        out.append(Grouping(start, persisted.assignments))
    return out


def annotation_frames(groupings: Iterable[Grouping], history: int = 5, stride: int = DEFAULT_STRIDE):
    """(frame, grouping) pairs keyed by the frame the grouping was observed at."""
    return [(g.window_start_frame + (history - 1) * stride, g) for g in groupings]
