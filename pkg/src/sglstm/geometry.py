"""Bounding box + depth to planar robot-frame coordinates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple


@dataclass(frozen=True)
class CameraModel:
    fov: float
    image_width: float
    image_height: float = 0.0

    def __post_init__(self):
        if not 0 < self.fov < math.pi:
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        if not self.image_width > 0:
            raise ValueError("image_width must be positive")


@dataclass(frozen=True)
class DepthBoundedBox:
    centroid: Tuple[float, float]
    depth: float


@dataclass(frozen=True)
class PlanarPosition:
    x_g: float
    y_g: float

    def __iter__(self):
        yield self.x_g
        yield self.y_g


def angular_displacement(box: DepthBoundedBox, cam: CameraModel, centered: bool = False) -> float:
    """Bearing ``x_b / w * fov``, measured from the left image edge.

    With ``centered`` the bearing is shifted by ``fov / 2`` so the image
    centre maps to zero.
    """
    x_b = box.centroid[0]
    if not 0 <= x_b <= cam.image_width:
        raise ValueError(f"x_b={x_b} outside [0, {cam.image_width}]")
    phi = (x_b / cam.image_width) * cam.fov
    if centered:
        phi -= cam.fov / 2
    return phi


def localize(box: DepthBoundedBox, cam: CameraModel, centered: bool = False) -> PlanarPosition:
    if not box.depth > 0:
        raise ValueError(f"depth must be positive, got {box.depth}")
    phi = angular_displacement(box, cam, centered)
    return PlanarPosition(box.depth * math.cos(phi), box.depth * math.sin(phi))


def group_box(members: Sequence[DepthBoundedBox]) -> DepthBoundedBox:
    """Group box: mean member centroid, mean member depth."""
    if not members:
        raise ValueError("a group box needs at least one member")
    n = len(members)
    cx = sum(b.centroid[0] for b in members) / n
    cy = sum(b.centroid[1] for b in members) / n
    return DepthBoundedBox((cx, cy), sum(b.depth for b in members) / n)
