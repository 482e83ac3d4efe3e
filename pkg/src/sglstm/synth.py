"""Synthetic group-structured walkway scenes with known groupings."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .core import DEFAULT_STRIDE, Grouping, Scene, Track


@dataclass(frozen=True)
class SynthConfig:
    """``group_size_weights[k]`` is the relative frequency of groups of size k + 1."""

    n_pedestrians: int = 20
    group_size_weights: Tuple[float, ...] = (0.3, 0.3, 0.25, 0.15)
    speed_range: Tuple[float, float] = (0.8, 1.6)
    jitter: float = 0.05
    path: str = "straight"
    seed: int = 0
    duration_steps: int = 20
    fps: float = 30.0
    stride: int = DEFAULT_STRIDE
    turn_rate_range: Tuple[float, float] = (0.15, 0.4)
    spacing: float = 0.7
    cell_size: float = 7.0
    formation: str = "fixed"

    def __post_init__(self):
        if self.n_pedestrians <= 0 or self.duration_steps <= 0:
            raise ValueError("pedestrian count and duration must be positive")
        if self.path not in ("straight", "arc"):
            raise ValueError(f"path must be 'straight' or 'arc', got {self.path!r}")
        if not self.group_size_weights or min(self.group_size_weights) < 0 or sum(self.group_size_weights) <= 0:
            raise ValueError("group_size_weights must be nonnegative with a positive sum")
        if self.formation not in ("fixed", "rotating"):
            raise ValueError(f"formation must be 'fixed' or 'rotating', got {self.formation!r}")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")


def _group_sizes(cfg: SynthConfig, rng) -> List[int]:
    w = np.asarray(cfg.group_size_weights, float)
    w = w / w.sum()
    sizes, left = [], cfg.n_pedestrians
    while left > 0:
        s = int(rng.choice(len(w), p=w)) + 1
        s = min(s, left)
        sizes.append(s)
        left -= s
    return sizes


def synthesize(cfg: SynthConfig = SynthConfig()):
    """Returns ``(scene, grouping)``.

    Each group follows one base path (straight, or a constant-turn-rate
    arc) at one speed. Members hold constant side-by-side offsets from
    the base path, laid out across the starting heading (``"fixed"``) or
    turning with the group (``"rotating"``), plus i.i.d. Gaussian jitter. Group
    start points sit on a jittered lattice so distinct groups start apart.
    """
    rng = np.random.default_rng(cfg.seed)
    sizes = _group_sizes(cfg, rng)
    n_groups = len(sizes)
    side = int(math.ceil(math.sqrt(n_groups)))
    slots = rng.permutation(side * side)[:n_groups]
    step_dt = cfg.stride / cfg.fps
    t = np.arange(cfg.duration_steps) * step_dt
    tracks = {}
    groups = []
    pid = 0
    for g, (size, slot) in enumerate(zip(sizes, slots)):
        origin = np.array([slot % side, slot // side], float) * cfg.cell_size
        origin += rng.uniform(-0.15, 0.15, 2) * cfg.cell_size
        heading0 = rng.uniform(-math.pi, math.pi)
        speed = rng.uniform(*cfg.speed_range)
        if cfg.path == "arc":
            omega = rng.uniform(*cfg.turn_rate_range) * rng.choice([-1.0, 1.0])
        else:
            omega = 0.0
        heading = heading0 + omega * t
        if omega == 0.0:
            base = origin + speed * t[:, None] * np.array([math.cos(heading0), math.sin(heading0)])
        else:
            r = speed / omega
            base = origin + r * np.stack([np.sin(heading) - math.sin(heading0),
                                          math.cos(heading0) - np.cos(heading)], axis=1)
        lateral = (np.arange(size) - (size - 1) / 2) * cfg.spacing
        lateral = lateral + rng.uniform(-0.1, 0.1, size) * cfg.spacing
        if cfg.formation == "rotating":
            normal = np.stack([-np.sin(heading), np.cos(heading)], axis=1)
        else:
            normal = np.array([[-math.sin(heading0), math.cos(heading0)]])
        members = []
        for k in range(size):
            xy = base + lateral[k] * normal
            if cfg.jitter > 0:
                xy = xy + rng.normal(0.0, cfg.jitter, xy.shape)
            frames = np.arange(cfg.duration_steps) * cfg.stride
            tracks[pid] = Track(pid, frames, xy)
            members.append(pid)
            pid += 1
        groups.append(members)
    frames = np.arange(cfg.duration_steps) * cfg.stride
    scene = Scene(frames, 1.0 / cfg.fps, tracks, {"synth": _cfg_dict(cfg)})
    return scene, Grouping.from_groups(groups, 0)


def _cfg_dict(cfg: SynthConfig) -> dict:
    from dataclasses import asdict
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def dense_fixture(n_groups: int = 20, group_size: int = 3, seed: int = 0, duration_steps: int = 10,
                  extent: float = 12.0, stride: int = DEFAULT_STRIDE, fps: float = 30.0):
    """Crowded benchmark scene: ``n_groups`` groups of ``group_size`` packed
    into a square of half-width ``extent``, all present for every step."""
    rng = np.random.default_rng(seed)
    step_dt = stride / fps
    t = np.arange(duration_steps) * step_dt
    frames = np.arange(duration_steps) * stride
    tracks, groups, pid = {}, [], 0
    for g in range(n_groups):
        origin = rng.uniform(-extent, extent, 2)
        heading = rng.uniform(-math.pi, math.pi)
        vel = rng.uniform(0.8, 1.4) * np.array([math.cos(heading), math.sin(heading)])
        normal = np.array([-vel[1], vel[0]]) / np.linalg.norm(vel)
        members = []
        for k in range(group_size):
            off = (k - (group_size - 1) / 2) * 0.6 * normal
            xy = origin + off + t[:, None] * vel + rng.normal(0, 0.03, (duration_steps, 2))
            tracks[pid] = Track(pid, frames, xy)
            members.append(pid)
            pid += 1
        groups.append(members)
    return Scene(frames, 1.0 / fps, tracks), Grouping.from_groups(groups)
