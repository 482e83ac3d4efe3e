"""Grid-based social pooling of neighbour hidden states and occupancy counts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class NeighborhoodGrid:
    """Square neighbourhood of half-width ``extent`` split into ``cells`` x ``cells`` bins."""

    extent: float = 4.0
    cells: int = 4

    def __post_init__(self):
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if self.cells < 1:
            raise ValueError("cells must be >= 1")

    @property
    def n_cells(self) -> int:
        return self.cells * self.cells


def cell_index(dx: float, dy: float, grid: NeighborhoodGrid) -> Optional[Tuple[int, int]]:
    """Bin a relative offset; ``None`` when outside the half-open neighbourhood."""
    g = grid.cells
    m = math.floor((dx + grid.extent) * g / (2 * grid.extent))
    n = math.floor((dy + grid.extent) * g / (2 * grid.extent))
    if 0 <= m < g and 0 <= n < g:
        return m, n
    return None


def cell_indices(rel: np.ndarray, grid: NeighborhoodGrid) -> np.ndarray:
    """Vectorised flat cell index ``m * G + n`` for offsets (..., 2); -1 when outside."""
    g = grid.cells
    mn = np.floor((rel + grid.extent) * g / (2 * grid.extent))
    inside = np.all((mn >= 0) & (mn < g), axis=-1)
    flat = mn[..., 0] * g + mn[..., 1]
    return np.where(inside, flat, -1).astype(np.int64)


def social_pool(ego_pos, neighbor_pos, neighbor_h, grid: NeighborhoodGrid = NeighborhoodGrid()) -> np.ndarray:
    """(G, G, D) sum of neighbour hidden states by the cell each neighbour occupies.

    Neighbours are accumulated in the order given; callers wanting
    order-independent results pass them sorted by id.
    """
    neighbor_pos = np.asarray(neighbor_pos, float).reshape(-1, 2)
    neighbor_h = np.asarray(neighbor_h, float)
    d = neighbor_h.shape[1] if neighbor_h.ndim == 2 else 0
    out = np.zeros((grid.n_cells, d))
    if len(neighbor_pos):
        idx = cell_indices(neighbor_pos - np.asarray(ego_pos, float), grid)
        keep = idx >= 0
        np.add.at(out, idx[keep], neighbor_h[keep])
    return out.reshape(grid.cells, grid.cells, d)


def occupancy_map(ego_pos, neighbor_pos, grid: NeighborhoodGrid = NeighborhoodGrid()) -> np.ndarray:
    """(G, G) neighbour counts."""
    neighbor_pos = np.asarray(neighbor_pos, float).reshape(-1, 2)
    out = np.zeros(grid.n_cells)
    if len(neighbor_pos):
        idx = cell_indices(neighbor_pos - np.asarray(ego_pos, float), grid)
        np.add.at(out, idx[idx >= 0], 1.0)
    return out.reshape(grid.cells, grid.cells)


def scene_pairs(pos: np.ndarray, segment: np.ndarray, grid: NeighborhoodGrid):
    """Ego/neighbour pairs for a batch of entities.

    Entities pool only with others of the same ``segment`` (scene window),
    never with themselves. Returns ``(dest, src)`` with ``dest = ego * C + cell``
    and ``src`` the neighbour row, ordered by ego then neighbour row so
    accumulation order is fixed.
    """
    pos = np.asarray(pos, float)
    segment = np.asarray(segment)
    n = len(pos)
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    if np.all(segment[1:] >= segment[:-1]):
        # contiguous segments: only the diagonal blocks can pair
        cuts = np.flatnonzero(np.diff(segment)) + 1
        bounds = zip(np.r_[0, cuts], np.r_[cuts, n])
    else:
        bounds = None
    dest, src = [], []
    for lo, hi in (bounds or [(0, n)]):
        p = pos[lo:hi]
        rel = p[None, :, :] - p[:, None, :]  # [ego, nb] = nb - ego
        cell = cell_indices(rel, grid)
        valid = cell >= 0
        if bounds is None:
            valid &= segment[:, None] == segment[None, :]
        np.fill_diagonal(valid, False)
        ego, nb = np.nonzero(valid)  # row-major: ego-major, neighbour-minor
        dest.append((ego + lo) * grid.n_cells + cell[ego, nb])
        src.append(nb + lo)
    return np.concatenate(dest), np.concatenate(src)


def pool_scene(pos: np.ndarray, h: np.ndarray, segment: np.ndarray, grid: NeighborhoodGrid) -> np.ndarray:
    """(N, C * D) social tensors for every entity of a batch."""
    dest, src = scene_pairs(pos, segment, grid)
    n, d = h.shape
    buf = np.zeros((n * grid.n_cells, d))
    if len(dest):
        np.add.at(buf, dest, h[src])
    return buf.reshape(n, grid.n_cells * d)


def occupancy_scene(pos: np.ndarray, segment: np.ndarray, grid: NeighborhoodGrid) -> np.ndarray:
    """(N, C) occupancy counts for every entity of a batch."""
    dest, _ = scene_pairs(pos, segment, grid)
    buf = np.zeros(len(pos) * grid.n_cells)
    if len(dest):
        np.add.at(buf, dest, 1.0)
    return buf.reshape(len(pos), grid.n_cells)
