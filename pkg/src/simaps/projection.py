"""Pinhole back-projection of depth pixels into world points and grid cells.

Grid orientation: rows follow world y, columns follow world x, and cell (0, 0)
has its lower corner at ``(origin_x, origin_y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InvalidDepth, MixedFrameIds
from .scene_io import VOID, CameraIntrinsics, FrameRecord

DEFAULT_SCALE = 0.05
DEFAULT_D_MAX = 10.0


class GridCell(NamedTuple):
    row: int
    col: int


class CellHit(NamedTuple):
    cell: GridCell
    pixel: tuple[int, int]  # (u, v) = (column, row) in the image
    world_z: float
    class_id: int
    entity_id: int
    frame_id: int


@dataclass(frozen=True)
class MapConfig:
    height: int = 1000
    width: int = 1000
    scale: float = DEFAULT_SCALE
    origin_x: float = 0.0
    origin_y: float = 0.0
    z_min: float = 0.05
    z_max: float = 2.0
    d_max: float = DEFAULT_D_MAX

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        if not self.z_min < self.z_max:
            raise ConfigError(f"z_min ({self.z_min}) must be below z_max ({self.z_max})")
        if not self.d_max > 0:
            raise ConfigError(f"d_max must be positive, got {self.d_max}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_cells(self) -> int:
        return self.height * self.width

    def same_grid(self, other: "MapConfig") -> bool:
        """True when both configs describe the same raster geometry."""
        return (self.height, self.width, self.scale, self.origin_x, self.origin_y) == \
            (other.height, other.width, other.scale, other.origin_x, other.origin_y)

    def cell_center(self, row, col):
        """World (x, y) of a cell center; accepts scalars or arrays."""
        return (self.origin_x + (np.asarray(col) + 0.5) * self.scale,
                self.origin_y + (np.asarray(row) + 0.5) * self.scale)


def pixel_to_camera(u: float, v: float, d: float, intr: CameraIntrinsics,
                    d_max: float = DEFAULT_D_MAX) -> np.ndarray:
    if not (0 < d <= d_max) or not math.isfinite(d):
        raise InvalidDepth(f"depth {d} outside (0, {d_max}]")
    return np.array([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, float(d)])


def camera_to_world(p, pose) -> np.ndarray:
    """Apply ``R @ p + t``; ``p`` may be a single point or an (N, 3) array.

    Written component-wise so scalar and batched calls round identically.
    """
    T = np.asarray(pose, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    out = np.empty(p.shape, dtype=np.float64)
    for i in range(3):
        out[..., i] = T[i, 0] * x + T[i, 1] * y + T[i, 2] * z + T[i, 3]
    return out


def grid_indices(x, y, cfg: MapConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised cell lookup: returns (row, col, in_bounds)."""
    col = np.floor((np.asarray(x, dtype=np.float64) - cfg.origin_x) / cfg.scale)
    row = np.floor((np.asarray(y, dtype=np.float64) - cfg.origin_y) / cfg.scale)
    ok = (row >= 0) & (row < cfg.height) & (col >= 0) & (col < cfg.width)
    return row.astype(np.int64), col.astype(np.int64), ok


def world_to_grid(p, cfg: MapConfig) -> GridCell | None:
    """Cell containing world point ``p``, or None when it falls outside the map."""
    row, col, ok = grid_indices(p[0], p[1], cfg)
    if not ok:
        return None
    return GridCell(int(row), int(col))


@dataclass(frozen=True)
class FrameHits:
    """All accepted cell hits of one frame, stored column-wise in row-major pixel order."""

    frame_id: int
    pixel: np.ndarray      # flat pixel index v * W + u
    u: np.ndarray
    v: np.ndarray
    row: np.ndarray
    col: np.ndarray
    z: np.ndarray
    class_id: np.ndarray
    entity_id: np.ndarray

    def __len__(self):
        return int(self.pixel.size)

    def __iter__(self) -> Iterator[CellHit]:
        for i in range(len(self)):
            yield CellHit(GridCell(int(self.row[i]), int(self.col[i])),
                          (int(self.u[i]), int(self.v[i])), float(self.z[i]),
                          int(self.class_id[i]), int(self.entity_id[i]), self.frame_id)

    def flat_cells(self, cfg: MapConfig) -> np.ndarray:
        return self.row * cfg.width + self.col

    @classmethod
    def from_hits(cls, hits: Sequence[CellHit], width: int) -> "FrameHits":
        """Build from a list of :class:`CellHit` (``width`` is the image width)."""
        fids = {h.frame_id for h in hits}
        if len(fids) > 1:
            raise MixedFrameIds(f"hits span frames {sorted(fids)}")
        fid = next(iter(fids), -1)
        u = np.array([h.pixel[0] for h in hits], dtype=np.int64)
        v = np.array([h.pixel[1] for h in hits], dtype=np.int64)
        return cls(
            frame_id=fid,
            pixel=v * width + u, u=u, v=v,
            row=np.array([h.cell.row for h in hits], dtype=np.int64),
            col=np.array([h.cell.col for h in hits], dtype=np.int64),
            z=np.array([h.world_z for h in hits], dtype=np.float64),
            class_id=np.array([h.class_id for h in hits], dtype=np.int64),
            entity_id=np.array([h.entity_id for h in hits], dtype=np.int64),
        )


def _world_points(frame: FrameRecord, intr: CameraIntrinsics, d_max: float):
    """Back-project every pixel with valid depth; returns (mask, u, v, world (N, 3))."""
    d = frame.depth.astype(np.float64)
    valid = (d > 0) & (d <= d_max)
    v, u = np.nonzero(valid)
    dv = d[v, u]
    cam = np.stack([(u - intr.cx) * dv / intr.fx, (v - intr.cy) * dv / intr.fy, dv], axis=-1)
    return valid, u, v, camera_to_world(cam, frame.pose)


def project_frame(frame: FrameRecord, intr: CameraIntrinsics, cfg: MapConfig) -> FrameHits:
    """Back-project a frame and keep pixels with valid depth, in-band z,
    a non-VOID class and an in-bounds cell."""
    _, u, v, w = _world_points(frame, intr, cfg.d_max)
    cls = frame.pano.class_id[v, u].astype(np.int64)
    ent = frame.pano.entity_id[v, u].astype(np.int64)
    row, col, inb = grid_indices(w[:, 0], w[:, 1], cfg)
    z = w[:, 2]
    keep = inb & (cls != VOID) & (z >= cfg.z_min) & (z <= cfg.z_max)
    u, v = u[keep].astype(np.int64), v[keep].astype(np.int64)
    return FrameHits(
        frame_id=frame.frame_id,
        pixel=v * intr.width + u, u=u, v=v,
        row=row[keep], col=col[keep], z=z[keep],
        class_id=cls[keep], entity_id=ent[keep],
    )


def auto_map_config(frames: Sequence[FrameRecord], intr: CameraIntrinsics,
                    base: MapConfig, margin: float = 1.0) -> MapConfig:
    """Size the grid to the bounding box of all in-band, labeled points plus ``margin``.

    The origin is snapped down to a multiple of the scale so cell boundaries
    fall on round world coordinates.
    """
    lo = np.array([np.inf, np.inf])
    hi = -lo
    for fr in frames:
        valid, u, v, w = _world_points(fr, intr, base.d_max)
        keep = (fr.pano.class_id[v, u] != VOID) & (w[:, 2] >= base.z_min) & (w[:, 2] <= base.z_max)
        if np.any(keep):
            xy = w[keep, :2]
            lo = np.minimum(lo, xy.min(axis=0))
            hi = np.maximum(hi, xy.max(axis=0))
    if not np.all(np.isfinite(lo)):
        return replace(base, height=1, width=1)
    s = base.scale
    ox = math.floor((lo[0] - margin) / s) * s
    oy = math.floor((lo[1] - margin) / s) * s
    width = int(math.ceil((hi[0] + margin - ox) / s))
    height = int(math.ceil((hi[1] + margin - oy) / s))
    return replace(base, origin_x=ox, origin_y=oy, height=max(height, 1), width=max(width, 1))
