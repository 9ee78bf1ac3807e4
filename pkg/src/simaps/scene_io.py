"""Loading, validating and writing recorded RGB-D + panoptic datasets.

Directory layout::

    intrinsics.txt          fx fy cx cy width height
    catalog.tsv             class_id<TAB>name<TAB>thing|stuff
    poses.txt               frame_id followed by 16 floats (row-major camera-to-world)
    frames/000000.depth     float32 little-endian raster, row-major
    frames/000000.pano      interleaved uint16 (class_id, entity_id) pairs, row-major

Camera convention is +z forward, +x right, +y down. The world frame is z-up.
Depth is planar (distance along the camera z axis).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadCatalog,
    BadDepth,
    BadIntrinsics,
    BadPose,
    DimensionMismatch,
    MissingFile,
    UnknownClassId,
)

VOID = 0xFFFF
THING = "thing"
STUFF = "stuff"

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(math.isfinite(v) for v in vals):
            raise BadIntrinsics(f"non-finite intrinsics {vals}")
        if self.width < 1 or self.height < 1:
            raise BadIntrinsics(f"raster size must be positive, got {self.width}x{self.height}")
        if self.fx <= 0 or self.fy <= 0:
            raise BadIntrinsics(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise BadIntrinsics(f"principal point ({self.cx}, {self.cy}) outside raster")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class ClassInfo:
    class_id: int
    name: str
    kind: str

    @property
    def is_thing(self) -> bool:
        return self.kind == THING


@dataclass(frozen=True)
class ClassCatalog:
    entries: tuple[ClassInfo, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for e in self.entries:
            if e.class_id == VOID:
                raise BadCatalog(f"class id {VOID:#x} is reserved for VOID")
            if not 0 <= e.class_id < VOID:
                raise BadCatalog(f"class id {e.class_id} out of range")
            if e.kind not in (THING, STUFF):
                raise BadCatalog(f"class {e.name!r}: kind must be thing or stuff, got {e.kind!r}")
            if e.class_id in by_id:
                raise BadCatalog(f"duplicate class id {e.class_id}")
            by_id[e.class_id] = e
        object.__setattr__(self, "_by_id", by_id)

    @classmethod
    def from_tuples(cls, rows: Iterable[tuple[int, str, str]]) -> "ClassCatalog":
        return cls(tuple(ClassInfo(int(i), n, k) for i, n, k in rows))

    def __contains__(self, class_id) -> bool:
        return class_id in self._by_id

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def get(self, class_id: int) -> ClassInfo:
        return self._by_id[class_id]

    def is_thing(self, class_id: int) -> bool:
        e = self._by_id.get(class_id)
        return e is not None and e.is_thing

    @property
    def ids(self) -> list[int]:
        return [e.class_id for e in self.entries]

    @property
    def thing_ids(self) -> list[int]:
        return sorted(e.class_id for e in self.entries if e.is_thing)

    @property
    def stuff_ids(self) -> list[int]:
        return sorted(e.class_id for e in self.entries if not e.is_thing)

    def id_of(self, name: str) -> int:
        for e in self.entries:
            if e.name == name:
                return e.class_id
        raise KeyError(name)

    def to_json(self) -> list[dict]:
        return [{"class_id": e.class_id, "name": e.name, "kind": e.kind} for e in self.entries]

    @classmethod
    def from_json(cls, rows) -> "ClassCatalog":
        return cls.from_tuples((r["class_id"], r["name"], r["kind"]) for r in rows)


@dataclass(frozen=True)
class PanopticFrame:
    class_id: np.ndarray   # (H, W) uint16, VOID where unlabeled
    entity_id: np.ndarray  # (H, W) uint16, frame-local instance index

    @property
    def shape(self):
        return self.class_id.shape


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    depth: np.ndarray  # (H, W) float32 meters, <= 0 marks invalid
    pano: PanopticFrame
    pose: np.ndarray   # (4, 4) camera-to-world


@dataclass(frozen=True)
class Dataset:
    intrinsics: CameraIntrinsics
    catalog: ClassCatalog
    frames: tuple[FrameRecord, ...]

    def __len__(self):
        return len(self.frames)


def check_pose(pose) -> np.ndarray:
    """Return ``pose`` as a float64 4x4 array or raise :class:`BadPose`."""
    T = np.asarray(pose, dtype=np.float64)
    if T.shape != (4, 4):
        raise BadPose(f"pose must be 4x4, got shape {T.shape}")
    if not np.all(np.isfinite(T)):
        raise BadPose("pose has non-finite entries")
    if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise BadPose(f"pose bottom row must be (0, 0, 0, 1), got {T[3].tolist()}")
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
        raise BadPose("pose rotation block is not orthonormal")
    return T


def validate_frame(frame: FrameRecord, intr: CameraIntrinsics, catalog: ClassCatalog | None = None) -> None:
    """Raise if ``frame`` violates any raster or pose invariant; return None when valid."""
    shape = intr.shape
    depth = frame.depth
    if depth.ndim != 2 or depth.shape != shape:
        raise DimensionMismatch(
            f"frame {frame.frame_id}: depth {depth.shape} != intrinsics {shape}")
    for name, arr in (("pano class", frame.pano.class_id), ("pano entity", frame.pano.entity_id)):
        if arr.shape != depth.shape:
            raise DimensionMismatch(
                f"frame {frame.frame_id}: {name} raster {arr.shape} != depth {depth.shape}")
    # NaN/inf are not valid sentinels; only values <= 0 mark invalid pixels.
    if not np.all(np.isfinite(depth)):
        raise BadDepth(f"frame {frame.frame_id}: non-finite depth values")
    if np.any(frame.pano.entity_id < 0):
        raise UnknownClassId(f"frame {frame.frame_id}: negative entity id")
    if catalog is not None:
        ids = np.unique(frame.pano.class_id)
        bad = [int(i) for i in ids if i != VOID and int(i) not in catalog]
        if bad:
            raise UnknownClassId(f"frame {frame.frame_id}: class ids {bad} not in catalog")
    try:
        check_pose(frame.pose)
    except BadPose as e:
        raise BadPose(f"frame {frame.frame_id}: {e}") from None


# -- reading ---------------------------------------------------------------

def _require(path: str) -> str:
    if not os.path.isfile(path):
        raise MissingFile(f"missing file: {path}")
    return path


def read_intrinsics(path: str) -> CameraIntrinsics:
    with open(_require(path), encoding="utf-8") as f:
        parts = f.read().split()
    if len(parts) != 6:
        raise BadIntrinsics(f"{path}: expected 6 values, got {len(parts)}")
    try:
        fx, fy, cx, cy = (float(p) for p in parts[:4])
        w, h = int(parts[4]), int(parts[5])
    except ValueError as e:
        raise BadIntrinsics(f"{path}: {e}") from None
    return CameraIntrinsics(fx, fy, cx, cy, w, h)


def read_catalog(path: str) -> ClassCatalog:
    rows = []
    with open(_require(path), encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise BadCatalog(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                rows.append((int(parts[0]), parts[1], parts[2].strip()))
            except ValueError:
                raise BadCatalog(f"{path}:{lineno}: bad class id {parts[0]!r}") from None
    return ClassCatalog.from_tuples(rows)


def read_poses(path: str) -> list[tuple[int, np.ndarray]]:
    out = []
    with open(_require(path), encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 17:
                raise BadPose(f"{path}:{lineno}: expected frame_id + 16 values, got {len(parts)} numbers")
            try:
                fid = int(parts[0])
                vals = [float(p) for p in parts[1:]]
            except ValueError as e:
                raise BadPose(f"{path}:{lineno}: {e}") from None
            try:
                T = check_pose(np.array(vals).reshape(4, 4))
            except BadPose as e:
                raise BadPose(f"{path}:{lineno}: {e}") from None
            out.append((fid, T))
    return out


def frame_paths(root: str, frame_id: int) -> tuple[str, str]:
    stem = os.path.join(root, "frames", f"{frame_id:06d}")
    return stem + ".depth", stem + ".pano"


def _read_frame(root: str, frame_id: int, pose: np.ndarray, intr: CameraIntrinsics,
                catalog: ClassCatalog) -> FrameRecord:
    dpath, ppath = frame_paths(root, frame_id)
    depth = np.fromfile(_require(dpath), dtype="<f4")
    pano = np.fromfile(_require(ppath), dtype="<u2")
    n = intr.width * intr.height
    if depth.size != n:
        raise DimensionMismatch(f"{dpath}: {depth.size} values, intrinsics require {n}")
    if pano.size != 2 * n:
        raise DimensionMismatch(f"{ppath}: {pano.size // 2} pairs, intrinsics require {n}")
    pano = pano.reshape(intr.height, intr.width, 2)
    rec = FrameRecord(
        frame_id=frame_id,
        depth=depth.astype(np.float32).reshape(intr.shape),
        pano=PanopticFrame(np.ascontiguousarray(pano[..., 0]), np.ascontiguousarray(pano[..., 1])),
        pose=pose,
    )
    validate_frame(rec, intr, catalog)
    return rec


def load_dataset(root: str, threads: int = 1) -> Dataset:
    """Load and validate the dataset stored under ``root``.

    Frames are returned in pose-file order; frame ids must be strictly increasing.
    """
    if not os.path.isdir(root):
        raise MissingFile(f"dataset directory not found: {root}")
    intr = read_intrinsics(os.path.join(root, "intrinsics.txt"))
    catalog = read_catalog(os.path.join(root, "catalog.tsv"))
    poses = read_poses(os.path.join(root, "poses.txt"))
    for (a, _), (b, _) in zip(poses, poses[1:]):
        if b <= a:
            raise BadPose(f"frame ids must be strictly increasing ({a} then {b})")

    def load(item):
        fid, T = item
        return _read_frame(root, fid, T, intr, catalog)

    if threads > 1 and len(poses) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(load, poses))
    else:
        frames = [load(p) for p in poses]
    return Dataset(intr, catalog, tuple(frames))


# -- writing ---------------------------------------------------------------

def write_dataset(root: str, intr: CameraIntrinsics, catalog: ClassCatalog,
                  frames: Sequence[FrameRecord]) -> None:
    os.makedirs(os.path.join(root, "frames"), exist_ok=True)
    with open(os.path.join(root, "intrinsics.txt"), "w", encoding="utf-8") as f:
        f.write(f"{intr.fx!r} {intr.fy!r} {intr.cx!r} {intr.cy!r} {intr.width} {intr.height}\n")
    with open(os.path.join(root, "catalog.tsv"), "w", encoding="utf-8") as f:
        for e in catalog:
            f.write(f"{e.class_id}\t{e.name}\t{e.kind}\n")
    with open(os.path.join(root, "poses.txt"), "w", encoding="utf-8") as f:
        for fr in frames:
            vals = " ".join(repr(float(v)) for v in np.asarray(fr.pose, dtype=np.float64).ravel())
            f.write(f"{fr.frame_id} {vals}\n")
    for fr in frames:
        dpath, ppath = frame_paths(root, fr.frame_id)
        np.asarray(fr.depth, dtype="<f4").tofile(dpath)
        pano = np.stack([fr.pano.class_id, fr.pano.entity_id], axis=-1).astype("<u2")
        pano.tofile(ppath)
