"""Occupancy derived from an SIMap and 8-connected A* over it."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy import ndimage

from ..errors import Unreachable
from ..projection import GridCell, MapConfig
from ..scene_io import VOID
from ..simap import SIMap

SQRT2 = math.sqrt(2.0)
_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class OccupancyView:
    cfg: MapConfig
    free: np.ndarray  # (H, W) bool

    @property
    def shape(self):
        return self.free.shape


class PlannedPath(NamedTuple):
    cells: list[GridCell]
    cost: float


def make_occupancy(m: SIMap, navigable_classes: Iterable[int], void_navigable: bool = False,
                   inflation: int = 2) -> OccupancyView:
    """Cells are free when their class is navigable; every other cell is an
    obstacle and is dilated by a Chebyshev disk of ``inflation`` cells."""
    if inflation < 0:
        raise ValueError("inflation must be >= 0")
    nav = np.isin(m.class_id, np.fromiter(navigable_classes, dtype=np.int64))
    if void_navigable:
        nav |= m.class_id == VOID
    blocked = ~nav
    if inflation > 0 and blocked.any():
        blocked = ndimage.binary_dilation(blocked, structure=np.ones((2 * inflation + 1,) * 2, bool))
    return OccupancyView(m.cfg, ~blocked)


def octile(dr: int, dc: int) -> float:
    dr, dc = abs(dr), abs(dc)
    return (SQRT2 - 1.0) * min(dr, dc) + max(dr, dc)


def neighbors(free: np.ndarray, r: int, c: int):
    """8-connected moves; a diagonal needs both adjacent orthogonal cells free."""
    H, W = free.shape
    for dr, dc in _MOVES:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < H and 0 <= nc < W) or not free[nr, nc]:
            continue
        if dr and dc:
            if not (free[r + dr, c] and free[r, c + dc]):
                continue
            yield nr, nc, SQRT2
        else:
            yield nr, nc, 1.0


def plan_path(occ: OccupancyView, start, goals) -> PlannedPath:
    """Minimal-cost 8-connected path from ``start`` to any cell in ``goals``.

    Step costs are 1 and sqrt(2); the heuristic is the octile distance to the
    nearest goal. The start cell is always enterable (the agent may begin
    inside an inflated obstacle band). Ties pop by (f, h, row-major index).
    """
    free = occ.free.copy()
    H, W = free.shape
    sr, sc = int(start[0]), int(start[1])
    if not (0 <= sr < H and 0 <= sc < W):
        raise Unreachable(f"start {tuple(start)} is outside the map")
    free[sr, sc] = True
    goal_set = {(int(r), int(c)) for r, c in goals if 0 <= r < H and 0 <= c < W and free[r, c]}
    if not goal_set:
        raise Unreachable("no navigable goal cell")
    g_arr = np.array(sorted(goal_set), dtype=np.int64)
    h_cache: dict[tuple[int, int], float] = {}

    def h(r, c):
        key = (r, c)
        v = h_cache.get(key)
        if v is None:
            dr = np.abs(g_arr[:, 0] - r)
            dc = np.abs(g_arr[:, 1] - c)
            v = float(np.min((SQRT2 - 1.0) * np.minimum(dr, dc) + np.maximum(dr, dc)))
            h_cache[key] = v
        return v

    g_cost = {(sr, sc): 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    h0 = h(sr, sc)
    heap = [(h0, h0, sr * W + sc, sr, sc)]
    closed = set()
    while heap:
        _, _, _, r, c = heapq.heappop(heap)
        if (r, c) in closed:
            continue
        closed.add((r, c))
        if (r, c) in goal_set:
            path = [(r, c)]
            while path[-1] in parent:
                path.append(parent[path[-1]])
            path.reverse()
            return PlannedPath([GridCell(*p) for p in path], g_cost[(r, c)])
        base = g_cost[(r, c)]
        for nr, nc, step in neighbors(free, r, c):
            if (nr, nc) in closed:
                continue
            ng = base + step
            if ng < g_cost.get((nr, nc), math.inf):
                g_cost[(nr, nc)] = ng
                parent[(nr, nc)] = (r, c)
                hn = h(nr, nc)
                heapq.heappush(heap, (ng + hn, hn, nr * W + nc, nr, nc))
    raise Unreachable(f"no path from {(sr, sc)} to any of {len(goal_set)} goal cells")


def reachable_from(occ: OccupancyView, start) -> np.ndarray:
    """Mask of free cells reachable from ``start`` under the same move rules."""
    free = occ.free.copy()
    sr, sc = int(start[0]), int(start[1])
    free[sr, sc] = True
    seen = np.zeros_like(free)
    seen[sr, sc] = True
    stack = [(sr, sc)]
    while stack:
        r, c = stack.pop()
        for nr, nc, _ in neighbors(free, r, c):
            if not seen[nr, nc]:
                seen[nr, nc] = True
                stack.append((nr, nc))
    return seen
