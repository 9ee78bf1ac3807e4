"""The final instance-level map: per-cell (class, instance) pairs.

Binary format ``SIMAP001`` (little-endian)::

    8  magic "SIMAP001"
    4  u32 height (rows)
    4  u32 width (cols)
    8  f64 scale (m / cell)
    8  f64 origin_x
    8  f64 origin_y
    1  u8 flags, bit0 = observation counts present
    4*H*W   (u16 class, u16 instance) records, row-major
    2*H*W   u16 observation counts (only when bit0 is set)

Without optional sections a map takes exactly ``41 + 4*H*W`` bytes.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import (
    BadMagic,
    FormatError,
    LabelMismatch,
    NotEnoughInstances,
    Truncated,
    UnknownClass,
    VersionUnsupported,
)
from .projection import GridCell, MapConfig
from .scene_io import VOID, ClassCatalog
from .semantic_grid import SemanticGrid

MAGIC = b"SIMAP001"
_HEADER = struct.Struct("<8sIIdddB")
HEADER_SIZE = _HEADER.size  # 41
FLAG_OBS = 0x01
_CELL = np.dtype([("cls", "<u2"), ("t", "<u2")])
_U16_MAX = 0xFFFF


@dataclass(frozen=True)
class InstanceRecord:
    class_id: int
    t: int
    footprint: tuple[GridCell, ...]
    centroid: tuple[float, float, float]

    @property
    def cell_count(self) -> int:
        return len(self.footprint)

    def footprint_xy(self, cfg: MapConfig) -> np.ndarray:
        """World (x, y) of every footprint cell center, shape (N, 2)."""
        rc = np.array(self.footprint, dtype=np.int64).reshape(-1, 2)
        x, y = cfg.cell_center(rc[:, 0], rc[:, 1])
        return np.stack([x, y], axis=1)


@dataclass(eq=False)
class SIMap:
    cfg: MapConfig
    class_id: np.ndarray              # (H, W), VOID for unlabeled cells
    instance: np.ndarray              # (H, W), 0 = no instance
    obs_count: np.ndarray | None = None
    catalog: ClassCatalog | None = field(default=None, compare=False)

    def __post_init__(self):
        shape = self.cfg.shape
        self.class_id = np.asarray(self.class_id, dtype=np.int64).reshape(shape)
        self.instance = np.asarray(self.instance, dtype=np.int64).reshape(shape)
        if self.obs_count is not None:
            self.obs_count = np.asarray(self.obs_count, dtype=np.int64).reshape(shape)

    @property
    def shape(self):
        return self.cfg.shape

    def __eq__(self, other):
        if not isinstance(other, SIMap):
            return NotImplemented
        same_obs = (self.obs_count is None and other.obs_count is None) or (
            self.obs_count is not None and other.obs_count is not None
            and np.array_equal(self.obs_count, other.obs_count))
        return (self.cfg.same_grid(other.cfg) and np.array_equal(self.class_id, other.class_id)
                and np.array_equal(self.instance, other.instance) and same_obs)

    def instance_keys(self) -> list[tuple[int, int]]:
        """Sorted distinct (class, t) pairs with t >= 1."""
        mask = self.instance > 0
        pairs = np.unique(np.stack([self.class_id[mask], self.instance[mask]], axis=1), axis=0)
        return [tuple(map(int, p)) for p in pairs]

    def footprint(self, class_id: int, t: int) -> np.ndarray:
        """Boolean mask of the cells of instance (class_id, t)."""
        return (self.class_id == class_id) & (self.instance == t)


def empty_map(cfg: MapConfig, catalog: ClassCatalog | None = None) -> SIMap:
    return SIMap(cfg, np.full(cfg.shape, VOID, dtype=np.int64),
                 np.zeros(cfg.shape, dtype=np.int64), catalog=catalog)


def assemble(grid: SemanticGrid, instance: np.ndarray, cfg: MapConfig | None = None,
             catalog: ClassCatalog | None = None, instance_class: np.ndarray | None = None,
             keep_obs: bool = False) -> SIMap:
    """Merge the semantic raster with a raster of instance indices.

    ``instance_class``, when given, states which class each instance label was
    computed for; any disagreement with the semantic label raises.
    """
    cfg = grid.cfg if cfg is None else cfg
    if not cfg.same_grid(grid.cfg):
        raise LabelMismatch("instance raster and semantic grid use different map geometry")
    cls = np.asarray(grid.class_id, dtype=np.int64)
    t = np.asarray(instance, dtype=np.int64).reshape(cls.shape)
    labeled = t > 0
    if np.any(labeled & (cls == VOID)):
        raise LabelMismatch("instance label on a VOID cell")
    if instance_class is not None:
        ic = np.asarray(instance_class, dtype=np.int64).reshape(cls.shape)
        if np.any(labeled & (ic != cls)):
            raise LabelMismatch("instance label on a cell whose semantic class differs")
    if catalog is not None and np.any(labeled):
        for c in np.unique(cls[labeled]):
            if not catalog.is_thing(int(c)):
                raise LabelMismatch(f"instance label on non-thing class {int(c)}")
    return SIMap(cfg, cls.copy(), t.copy(),
                 grid.obs_count.copy() if keep_obs else None, catalog)


# -- serialization ---------------------------------------------------------

def serialize(m: SIMap) -> bytes:
    if np.any((m.class_id < 0) | (m.class_id > _U16_MAX)):
        raise FormatError("class ids must fit in u16")
    if np.any((m.instance < 0) | (m.instance > _U16_MAX)):
        raise FormatError("instance indices must fit in u16")
    cfg = m.cfg
    flags = FLAG_OBS if m.obs_count is not None else 0
    head = _HEADER.pack(MAGIC, cfg.height, cfg.width, cfg.scale, cfg.origin_x, cfg.origin_y, flags)
    cells = np.empty(cfg.shape, dtype=_CELL)
    cells["cls"] = m.class_id
    cells["t"] = m.instance
    parts = [head, cells.tobytes()]
    if m.obs_count is not None:
        parts.append(np.minimum(m.obs_count, _U16_MAX).astype("<u2").tobytes())
    return b"".join(parts)


def serialized_size(height: int, width: int, with_obs: bool = False) -> int:
    return HEADER_SIZE + 4 * height * width + (2 * height * width if with_obs else 0)


def deserialize(data: bytes, base: MapConfig | None = None) -> SIMap:
    """Decode ``data``; ``base`` supplies the non-geometric config fields."""
    if len(data) < len(MAGIC):
        raise Truncated(f"{len(data)} bytes is shorter than the magic")
    magic = bytes(data[:8])
    if magic != MAGIC:
        if magic.startswith(b"SIMAP"):
            raise VersionUnsupported(f"unsupported format version {magic[5:]!r}")
        raise BadMagic(f"bad magic {magic!r}")
    if len(data) < HEADER_SIZE:
        raise Truncated(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    _, h, w, s, ox, oy, flags = _HEADER.unpack_from(data, 0)
    if flags & ~FLAG_OBS:
        raise VersionUnsupported(f"unknown flag bits {flags:#04x}")
    want = serialized_size(h, w, bool(flags & FLAG_OBS))
    if len(data) < want:
        raise Truncated(f"expected {want} bytes, got {len(data)}")
    if len(data) > want:
        raise FormatError(f"{len(data) - want} trailing bytes after map payload")
    if h < 1 or w < 1 or not (s > 0 and math.isfinite(s)):
        raise FormatError(f"invalid geometry {h}x{w} at scale {s}")
    cfg = replace(base or MapConfig(), height=h, width=w, scale=s, origin_x=ox, origin_y=oy)
    n = h * w
    cells = np.frombuffer(data, dtype=_CELL, count=n, offset=HEADER_SIZE).reshape(h, w)
    obs = None
    if flags & FLAG_OBS:
        obs = np.frombuffer(data, dtype="<u2", count=n, offset=HEADER_SIZE + 4 * n)
    return SIMap(cfg, cells["cls"], cells["t"], obs)


def save(m: SIMap, path: str, meta: dict | None = None) -> None:
    """Write ``path`` plus a ``<name>.meta.json`` sidecar (catalog + free-form metadata)."""
    with open(path, "wb") as f:
        f.write(serialize(m))
    sidecar = {"catalog": m.catalog.to_json() if m.catalog is not None else None}
    if meta:
        sidecar.update(meta)
    with open(meta_path(path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def meta_path(path: str) -> str:
    root, ext = os.path.splitext(path)
    return (root if ext == ".simap" else path) + ".meta.json"


def load(path: str, base: MapConfig | None = None) -> SIMap:
    with open(path, "rb") as f:
        m = deserialize(f.read(), base)
    mp = meta_path(path)
    if os.path.isfile(mp):
        with open(mp, encoding="utf-8") as f:
            meta = json.load(f)
        if meta.get("catalog"):
            m.catalog = ClassCatalog.from_json(meta["catalog"])
    return m


# -- queries ---------------------------------------------------------------

def _record(m: SIMap, class_id: int, t: int, rows, cols) -> InstanceRecord:
    x, y = m.cfg.cell_center(rows, cols)
    fp = tuple(GridCell(int(r), int(c)) for r, c in zip(rows, cols))
    return InstanceRecord(class_id, t, fp, (float(np.mean(x)), float(np.mean(y)), 0.0))


def instances_of(m: SIMap, class_id: int) -> list[InstanceRecord]:
    """All numbered instances of ``class_id``, ordered by t."""
    if m.catalog is not None and class_id not in m.catalog:
        raise UnknownClass(class_id)
    mask = (m.class_id == class_id) & (m.instance > 0)
    rows, cols = np.nonzero(mask)
    ts = m.instance[rows, cols]
    out = []
    for t in np.unique(ts):
        sel = ts == t
        out.append(_record(m, class_id, int(t), rows[sel], cols[sel]))
    return out


def instance(m: SIMap, class_id: int, t: int) -> InstanceRecord | None:
    rows, cols = np.nonzero(m.footprint(class_id, t))
    if t < 1 or rows.size == 0:
        return None
    return _record(m, class_id, t, rows, cols)


def rank_by_distance(records, origin) -> list[InstanceRecord]:
    """Sort by Euclidean centroid distance from ``origin`` (x, y), ties by t."""
    ox, oy = float(origin[0]), float(origin[1])
    return sorted(records, key=lambda r: (math.hypot(r.centroid[0] - ox, r.centroid[1] - oy), r.t))


def nth_closest(m: SIMap, class_id: int, origin, n: int) -> InstanceRecord:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ranked = rank_by_distance(instances_of(m, class_id), origin)
    if n > len(ranked):
        raise NotEnoughInstances(f"asked for #{n} closest of class {class_id}, only {len(ranked)} exist")
    return ranked[n - 1]


class MapStats(NamedTuple):
    shape: tuple[int, int]
    labeled_cells: int
    classes: dict   # class_id -> cell count
    instances: dict  # class_id -> number of instances


def stats(m: SIMap) -> MapStats:
    labeled = m.class_id != VOID
    ids, counts = np.unique(m.class_id[labeled], return_counts=True)
    inst: dict[int, int] = {}
    for c, _ in m.instance_keys():
        inst[c] = inst.get(c, 0) + 1
    return MapStats(m.shape, int(labeled.sum()),
                    {int(i): int(n) for i, n in zip(ids, counts)}, inst)
