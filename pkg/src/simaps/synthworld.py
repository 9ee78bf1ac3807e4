"""Synthetic box-world scenes with exact ground truth.

Scenes are axis-aligned boxes standing on a floor plane at z = 0. The renderer
ray-casts a pinhole camera against them and emits depth plus panoptic rasters
(entity ids are dense per frame, in first-visible order, so they carry no
cross-frame identity). ``truth_map`` rasterizes the same boxes into an SIMap.

Box edges are snapped to a ``snap`` lattice: free-standing edges sit at
half-cell offsets and the shared face of a touching pair sits on a cell
boundary. This keeps footprints unambiguous when the map scale equals ``snap``
and the map origin is a multiple of it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .community import number_communities
from .errors import PlacementInfeasible
from .projection import MapConfig
from .scene_io import VOID, CameraIntrinsics, ClassCatalog, FrameRecord, PanopticFrame
from .semantic_grid import SemanticGrid
from .simap import SIMap

FLOOR_CLASS = 0
MAX_TRIES = 10_000

SYNTH_CATALOG = ClassCatalog.from_tuples([
    (0, "floor", "stuff"),
    (1, "chair", "thing"),
    (2, "table", "thing"),
    (3, "sofa", "thing"),
    (4, "cabinet", "thing"),
    (5, "plant", "thing"),
])

# (dx, dy) footprint in snap units and height range in meters, per class
_CLASS_SHAPES = {
    1: ((9, 9), (0.45, 0.9)),
    2: ((17, 11), (0.7, 0.8)),
    3: ((19, 9), (0.5, 0.7)),
    4: ((11, 7), (0.9, 1.3)),
    5: ((7, 7), (0.6, 1.2)),
}


@dataclass(frozen=True)
class Box:
    class_id: int
    instance_uid: int
    center: tuple[float, float]
    size: tuple[float, float, float]
    z_base: float = 0.0

    @property
    def lo(self):
        return (self.center[0] - self.size[0] / 2, self.center[1] - self.size[1] / 2, self.z_base)

    @property
    def hi(self):
        return (self.center[0] + self.size[0] / 2, self.center[1] + self.size[1] / 2,
                self.z_base + self.size[2])

    @property
    def top(self) -> float:
        return self.z_base + self.size[2]


@dataclass(frozen=True)
class SceneSpec:
    extent: tuple[float, float]
    boxes: tuple[Box, ...]
    seed: int = 0
    touching: tuple[tuple[int, int], ...] = ()

    def to_json(self) -> dict:
        d = asdict(self)
        d["boxes"] = [asdict(b) for b in self.boxes]
        return d

    @classmethod
    def from_json(cls, d) -> "SceneSpec":
        boxes = tuple(Box(b["class_id"], b["instance_uid"], tuple(b["center"]), tuple(b["size"]),
                          b.get("z_base", 0.0)) for b in d["boxes"])
        return cls(tuple(d["extent"]), boxes, d.get("seed", 0),
                   tuple(tuple(p) for p in d.get("touching", ())))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class SceneParams:
    n_objects: int = 10
    classes: tuple[int, ...] = (1, 2, 3, 4, 5)
    extent: tuple[float, float] = (8.0, 8.0)
    min_gap: float = 0.3
    mode: str = "separated"          # or "touching"
    touching_pairs: int = 0
    pair_class: int = 1
    snap: float = 0.05


@dataclass(frozen=True)
class SceneTruth:
    map: SIMap
    uid_of: dict = field(default_factory=dict)  # (class_id, t) -> instance_uid

    def t_of(self, uid: int) -> tuple[int, int]:
        for k, u in self.uid_of.items():
            if u == uid:
                return k
        raise KeyError(uid)


@dataclass(frozen=True)
class RenderOut:
    depth: np.ndarray
    pano: PanopticFrame
    pose: np.ndarray


# -- scene generation ------------------------------------------------------

def rect_gap(a: Box, b: Box) -> float:
    """Euclidean distance between two box footprints (0 when they touch or overlap)."""
    (alx, aly, _), (ahx, ahy, _) = a.lo, a.hi
    (blx, bly, _), (bhx, bhy, _) = b.lo, b.hi
    gx = max(0.0, blx - ahx, alx - bhx)
    gy = max(0.0, bly - ahy, aly - bhy)
    return math.hypot(gx, gy)


def _snap_box(rng, cls: int, snap: float, extent, uid: int, height: float | None = None) -> Box:
    (nx, ny), (hlo, hhi) = _CLASS_SHAPES.get(cls, ((9, 9), (0.5, 1.0)))
    if rng.random() < 0.5 and cls not in (1, 5):
        nx, ny = ny, nx
    dx, dy = nx * snap, ny * snap
    h = round(float(rng.uniform(hlo, hhi)), 2) if height is None else height
    # edges at (k + 1/2) * snap
    kx = int(rng.integers(1, max(2, int((extent[0] - dx) / snap) - 1)))
    ky = int(rng.integers(1, max(2, int((extent[1] - dy) / snap) - 1)))
    lo_x = (kx + 0.5) * snap
    lo_y = (ky + 0.5) * snap
    return Box(cls, uid, (lo_x + dx / 2, lo_y + dy / 2), (dx, dy, h))


def _inside(b: Box, extent) -> bool:
    lx, ly, _ = b.lo
    hx, hy, _ = b.hi
    return lx >= 0 and ly >= 0 and hx <= extent[0] and hy <= extent[1]


def _touching_pair(rng, cls: int, snap: float, extent, uid: int) -> tuple[Box, Box]:
    """Two equal-height boxes sharing a face that lies on a cell boundary."""
    (n, _), (hlo, hhi) = _CLASS_SHAPES.get(cls, ((9, 9), (0.5, 1.0)))
    h = round(float(rng.uniform(hlo, hhi)), 2)
    along = (n + 0.5) * snap  # outer edges stay at half-cell offsets
    across = n * snap
    axis = int(rng.integers(0, 2))
    span = 2 * along if axis == 0 else across
    k_shared = int(rng.integers(n + 2, max(n + 3, int((extent[axis] - span / 2) / snap) - n - 1)))
    shared = k_shared * snap
    k_side = int(rng.integers(1, max(2, int((extent[1 - axis] - across) / snap) - 1)))
    side_mid = (k_side + 0.5) * snap + across / 2
    if axis == 0:
        a = Box(cls, uid, (shared - along / 2, side_mid), (along, across, h))
        b = Box(cls, uid + 1, (shared + along / 2, side_mid), (along, across, h))
    else:
        a = Box(cls, uid, (side_mid, shared - along / 2), (across, along, h))
        b = Box(cls, uid + 1, (side_mid, shared + along / 2), (across, along, h))
    return a, b


def generate_scene(params: SceneParams = SceneParams(), seed: int = 0) -> SceneSpec:
    """Place boxes by rejection sampling (at most ``MAX_TRIES`` attempts per box)."""
    rng = np.random.default_rng(seed)
    extent = tuple(float(e) for e in params.extent)
    boxes: list[Box] = []
    touching: list[tuple[int, int]] = []
    uid = 1

    def fits(cands):
        return all(_inside(c, extent) for c in cands) and all(
            rect_gap(c, b) >= params.min_gap for c in cands for b in boxes)

    n_pairs = params.touching_pairs if params.mode == "touching" else 0
    if params.mode not in ("separated", "touching"):
        raise ValueError(f"unknown placement mode {params.mode!r}")
    if 2 * n_pairs > params.n_objects:
        raise PlacementInfeasible(f"{n_pairs} pairs need more than {params.n_objects} objects")
    for _ in range(n_pairs):
        for _ in range(MAX_TRIES):
            a, b = _touching_pair(rng, params.pair_class, params.snap, extent, uid)
            if fits((a, b)):
                boxes += [a, b]
                touching.append((a.instance_uid, b.instance_uid))
                uid += 2
                break
        else:
            raise PlacementInfeasible("could not place a touching pair")
    singles = params.n_objects - 2 * n_pairs
    classes = list(params.classes)
    for i in range(singles):
        cls = classes[i % len(classes)]
        for _ in range(MAX_TRIES):
            b = _snap_box(rng, cls, params.snap, extent, uid)
            if fits((b,)):
                boxes.append(b)
                uid += 1
                break
        else:
            raise PlacementInfeasible(
                f"could not place object {i + 1} of {singles} with gap {params.min_gap} m")
    return SceneSpec(extent, tuple(boxes), seed, tuple(touching))


# -- ground truth ----------------------------------------------------------

def scene_map_config(scene: SceneSpec, base: MapConfig = MapConfig(), margin: float = 1.0) -> MapConfig:
    """Grid covering the floor extent plus ``margin`` on every side."""
    s = base.scale
    k = int(math.ceil(margin / s))
    return replace(base, origin_x=-k * s, origin_y=-k * s,
                   width=int(math.ceil(scene.extent[0] / s - 1e-9)) + 2 * k,
                   height=int(math.ceil(scene.extent[1] / s - 1e-9)) + 2 * k)


def truth_map(scene: SceneSpec, cfg: MapConfig, catalog: ClassCatalog = SYNTH_CATALOG,
              min_instance_cells: int = 1) -> SceneTruth:
    """Rasterize footprints: a cell belongs to a box when their interiors overlap;
    where boxes compete the taller one wins (lower uid on equal tops).
    Everything else inside the floor extent is floor."""
    H, W, s = cfg.height, cfg.width, cfg.scale
    x0 = cfg.origin_x + np.arange(W) * s
    y0 = cfg.origin_y + np.arange(H) * s
    cls = np.full((H, W), VOID, dtype=np.int64)
    uid = np.zeros((H, W), dtype=np.int64)
    top = np.full((H, W), -np.inf)
    eps = 1e-9 * s
    floor_x = (x0 + s > eps) & (x0 < scene.extent[0] - eps)
    floor_y = (y0 + s > eps) & (y0 < scene.extent[1] - eps)
    cls[np.ix_(floor_y, floor_x)] = FLOOR_CLASS
    for b in sorted(scene.boxes, key=lambda b: -b.instance_uid):
        (lx, ly, _), (hx, hy, _) = b.lo, b.hi
        cx = (x0 + s > lx + eps) & (x0 < hx - eps)
        cy = (y0 + s > ly + eps) & (y0 < hy - eps)
        m = np.zeros((H, W), dtype=bool)
        m[np.ix_(cy, cx)] = True
        # boxes visited by descending uid, so >= lets the lower uid win ties
        win = m & (b.top >= top)
        cls[win] = b.class_id
        uid[win] = b.instance_uid
        top[win] = b.top

    inst = np.zeros((H, W), dtype=np.int64)
    uid_of = {}
    for c in sorted({b.class_id for b in scene.boxes}):
        cells = np.flatnonzero((cls == c).ravel())
        if cells.size == 0:
            continue
        part = [int(u) for u in uid.ravel()[cells]]
        ts = number_communities(cells, part, min_instance_cells)
        inst.ravel()[cells] = ts
        for u, t in zip(part, ts):
            if t:
                uid_of[(c, t)] = u
    return SceneTruth(SIMap(cfg, cls, inst, catalog=catalog), uid_of)


# -- rendering -------------------------------------------------------------

def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose looking from ``eye`` toward ``target`` (x right, y down, z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - eye
    f /= np.linalg.norm(f)
    r = np.cross(f, up)
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    T = np.eye(4)
    T[:3, 0], T[:3, 1], T[:3, 2], T[:3, 3] = r, d, f, eye
    return T


def render_frame(scene: SceneSpec, pose, intr: CameraIntrinsics,
                 depth_noise: float = 0.0, rng=None) -> RenderOut:
    """Ray-cast every pixel against the boxes and the floor plane."""
    T = np.asarray(pose, dtype=np.float64)
    R, o = T[:3, :3], T[:3, 3]
    v, u = np.mgrid[0:intr.height, 0:intr.width]
    cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy,
                    np.ones_like(u, dtype=np.float64)], axis=-1).reshape(-1, 3)
    dirs = cam @ R.T  # camera z component is 1, so the ray parameter equals depth
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best = np.full(n, -1, dtype=np.int64)  # -1 none, -2 floor, else box index

    with np.errstate(divide="ignore", invalid="ignore"):
        tf = -o[2] / dirs[:, 2]
        hit = (dirs[:, 2] < 0) & (tf > 0)
        fx = o[0] + tf * dirs[:, 0]
        fy = o[1] + tf * dirs[:, 1]
        hit &= (fx >= 0) & (fx <= scene.extent[0]) & (fy >= 0) & (fy <= scene.extent[1])
        best_t[hit] = tf[hit]
        best[hit] = -2
        inv = 1.0 / dirs
        for i, b in enumerate(scene.boxes):
            lo, hi = np.array(b.lo), np.array(b.hi)
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
            tmin = np.nanmax(np.minimum(t1, t2), axis=1)
            tmax = np.nanmin(np.maximum(t1, t2), axis=1)
            ok = (tmax >= tmin) & (tmin > 0) & (tmin < best_t)
            best_t[ok] = tmin[ok]
            best[ok] = i

    depth = np.where(best == -1, 0.0, best_t)
    if depth_noise > 0:
        rng = np.random.default_rng(0) if rng is None else rng
        depth = np.where(depth > 0, depth + rng.normal(0.0, depth_noise, n), depth)
    cls = np.full(n, VOID, dtype=np.int64)
    ent = np.zeros(n, dtype=np.int64)
    cls[best == -2] = FLOOR_CLASS
    for i, b in enumerate(scene.boxes):
        cls[best == i] = b.class_id
    # dense entity ids in first-visible (row-major) order
    seg = np.where(best == -1, -1, best + 2)
    visible = seg >= 0
    _, first = np.unique(seg[visible], return_index=True)
    order = np.argsort(first)
    uniq = np.unique(seg[visible])[order]
    lut = {int(s_): k for k, s_ in enumerate(uniq)}
    ent[visible] = [lut[int(s_)] for s_ in seg[visible]]
    shape = intr.shape
    return RenderOut(depth.reshape(shape).astype(np.float32),
                     PanopticFrame(cls.reshape(shape).astype(np.uint16),
                                   ent.reshape(shape).astype(np.uint16)), T)


def camera_trajectory(scene: SceneSpec, n_frames: int, mode: str = "orbit", seed: int = 0,
                      height: float = 1.5) -> list[np.ndarray]:
    """Orbit: a circle at ``height`` around the scene, looking at its center.
    Sweep: a lawnmower pass over the floor looking forward with a 45 degree downward pitch."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    ex, ey = scene.extent
    cx, cy = ex / 2, ey / 2
    poses = []
    if mode == "orbit":
        rng = np.random.default_rng(seed)
        phase = float(rng.uniform(0, 2 * math.pi / n_frames))
        radius = math.hypot(ex, ey) / 2 + 0.5
        for k in range(n_frames):
            a = phase + 2 * math.pi * k / n_frames
            eye = (cx + radius * math.cos(a), cy + radius * math.sin(a), height)
            poses.append(look_at(eye, (cx, cy, 0.0)))
    elif mode == "sweep":
        lanes = max(1, int(round(math.sqrt(n_frames))))
        per_lane = math.ceil(n_frames / lanes)
        for k in range(n_frames):
            lane, j = divmod(k, per_lane)
            frac = (j + 0.5) / per_lane
            y = ey * (lane + 0.5) / lanes
            direction = 1.0 if lane % 2 == 0 else -1.0
            x = ex * (frac if direction > 0 else 1 - frac)
            eye = (x, y, height)
            target = (x + direction * height, y, 0.0)  # 45 degree pitch
            poses.append(look_at(eye, target))
    else:
        raise ValueError(f"unknown trajectory mode {mode!r}")
    return poses


def render_dataset(scene: SceneSpec, poses: Sequence[np.ndarray], intr: CameraIntrinsics,
                   depth_noise: float = 0.0, seed: int = 0) -> list[FrameRecord]:
    rng = np.random.default_rng(seed)
    frames = []
    for i, T in enumerate(poses):
        out = render_frame(scene, T, intr, depth_noise, rng)
        frames.append(FrameRecord(i, out.depth, out.pano, out.pose))
    return frames


DEFAULT_INTRINSICS = CameraIntrinsics(fx=200.0, fy=200.0, cx=159.5, cy=119.5, width=320, height=240)


# -- connected-components baseline -----------------------------------------

_FOUR = ndimage.generate_binary_structure(2, 1)


def cc_baseline(grid: SemanticGrid, thing_ids: Sequence[int], min_instance_cells: int = 3) -> np.ndarray:
    """Instance raster from 4-connected components of same-class cells,
    numbered with the same size / row-major rule as the community pipeline."""
    inst = np.zeros(grid.shape, dtype=np.int64)
    for c in thing_ids:
        mask = grid.class_id == c
        if not mask.any():
            continue
        lab, _ = ndimage.label(mask, structure=_FOUR)
        cells = np.flatnonzero(mask.ravel())
        part = lab.ravel()[cells].tolist()
        inst.ravel()[cells] = number_communities(cells, part, min_instance_cells)
    return inst
