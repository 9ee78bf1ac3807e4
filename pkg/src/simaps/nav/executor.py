"""Goal resolution on an SIMap and sequential execution of navigation programs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..errors import EmptyView, NavError, NoSuchInstance, NotEnoughInstances, Unreachable
from ..projection import GridCell, grid_indices
from ..simap import InstanceRecord, SIMap, instance, instances_of, rank_by_distance
from .dsl import PrimitiveCall, Program
from .planner import OccupancyView, make_occupancy, plan_path, reachable_from


def normalize_heading(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class NavConfig:
    navigable_classes: tuple[int, ...] | None = None  # None: every stuff class of the catalog
    void_navigable: bool = False
    inflation: int = 2
    fov_half_angle_deg: float = 60.0
    stop_radius: float = 0.5

    def __post_init__(self):
        if self.inflation < 0:
            raise ValueError("inflation must be >= 0")
        if not self.stop_radius > 0:
            raise ValueError("stop_radius must be positive")


@dataclass
class Goal:
    """Resolved target of a goal-directed call.

    ``cells`` is a boolean mask of acceptable stopping cells; ``targets`` are the
    instances the call refers to; ``point`` is the reference world point for
    point-like goals (between, side-relative, explicit points).
    """
    cells: np.ndarray
    targets: list = field(default_factory=list)
    point: tuple[float, float] | None = None


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    completed_calls: int = 0
    failed: bool = False
    error: str | None = None

    def add_pose(self, x, y, heading, event=None):
        rec = {"step": len(self.records), "x": float(x), "y": float(y), "heading": float(heading)}
        if event is not None:
            rec["event"] = event
        self.records.append(rec)

    def add_event(self, event: dict):
        last = self.records[-1]
        self.add_pose(last["x"], last["y"], last["heading"], event)

    @property
    def final(self) -> AgentState:
        last = self.records[-1]
        return AgentState(last["x"], last["y"], last["heading"])

    def events(self) -> list[dict]:
        return [r["event"] for r in self.records if "event" in r]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


# -- helpers ---------------------------------------------------------------

def class_id_of(m: SIMap, name: str) -> int:
    if m.catalog is not None:
        try:
            return m.catalog.id_of(name)
        except KeyError:
            pass
    try:
        return int(name)
    except ValueError:
        raise NoSuchInstance(f"unknown object class {name!r}") from None


def navigable_classes(m: SIMap, cfg: NavConfig) -> tuple[int, ...]:
    if cfg.navigable_classes is not None:
        return tuple(cfg.navigable_classes)
    return tuple(m.catalog.stuff_ids) if m.catalog is not None else ()


def occupancy_for(m: SIMap, cfg: NavConfig) -> OccupancyView:
    return make_occupancy(m, navigable_classes(m, cfg), cfg.void_navigable, cfg.inflation)


def agent_cell(m: SIMap, agent: AgentState) -> GridCell:
    r, c, ok = grid_indices(agent.x, agent.y, m.cfg)
    if not ok:
        raise Unreachable(f"agent position ({agent.x:.3f}, {agent.y:.3f}) is outside the map")
    return GridCell(int(r), int(c))


def _cell_xy(m: SIMap):
    H, W = m.shape
    return m.cfg.cell_center(*np.mgrid[0:H, 0:W])


def _near_mask(m: SIMap, mask: np.ndarray, radius: float) -> np.ndarray:
    """Cells (outside ``mask``) whose center lies within ``radius`` of a ``mask`` cell center."""
    if not mask.any():
        return np.zeros_like(mask)
    dist = ndimage.distance_transform_edt(~mask) * m.cfg.scale
    return (dist <= radius + 1e-9) & ~mask


def _nearest_cell(m: SIMap, allowed: np.ndarray, point) -> np.ndarray:
    """Single-cell mask: the allowed cell whose center is nearest ``point`` (row-major ties)."""
    out = np.zeros_like(allowed)
    if not allowed.any():
        return out
    x, y = _cell_xy(m)
    d = np.where(allowed, np.hypot(x - point[0], y - point[1]), np.inf)
    out.flat[int(np.argmin(d))] = True
    return out


def _get_instance(m: SIMap, cls_name: str, t: int) -> InstanceRecord:
    rec = instance(m, class_id_of(m, cls_name), t)
    if rec is None:
        raise NoSuchInstance(f"no instance {t} of {cls_name!r}")
    return rec


def _ranked(m: SIMap, cls_name: str, agent: AgentState) -> list[InstanceRecord]:
    return rank_by_distance(instances_of(m, class_id_of(m, cls_name)), agent.xy)


def _pick(ranked: list, n: int, what: str) -> InstanceRecord:
    if n < 1:
        raise NotEnoughInstances(f"rank must be >= 1, got {n}")
    if n > len(ranked):
        raise NotEnoughInstances(f"asked for #{n} {what}, only {len(ranked)} available")
    return ranked[n - 1]


def in_view(records: Sequence[InstanceRecord], agent: AgentState, half_angle_deg: float):
    """Instances whose centroid lies inside the agent's field-of-view cone."""
    half = math.radians(half_angle_deg)
    out = []
    for r in records:
        dx, dy = r.centroid[0] - agent.x, r.centroid[1] - agent.y
        if dx == 0 and dy == 0:
            continue
        if abs(normalize_heading(math.atan2(dy, dx) - agent.heading)) <= half:
            out.append(r)
    return out


def principal_axes(m: SIMap, rec: InstanceRecord):
    """Unit major/minor axes of the footprint and its half extents along them.

    The major axis is the longest footprint direction, signed to point toward
    +x (or +y when vertical); the minor axis is the major rotated +90 degrees.
    """
    pts = rec.footprint_xy(m.cfg)
    c = pts.mean(axis=0)
    d = pts - c
    cov = d.T @ d / max(len(pts), 1)
    vals, vecs = np.linalg.eigh(cov)
    major = vecs[:, int(np.argmax(vals))]
    if abs(vals[0] - vals[1]) <= 1e-12 * max(1.0, abs(vals).max()):
        major = np.array([1.0, 0.0])
    if major[0] < -1e-12 or (abs(major[0]) <= 1e-12 and major[1] < 0):
        major = -major
    minor = np.array([-major[1], major[0]])
    half = m.cfg.scale / 2
    return major, minor, float(np.abs(d @ major).max() + half), float(np.abs(d @ minor).max() + half)


def side_point(m: SIMap, rec: InstanceRecord, side: str, offset: float):
    major, minor, a, b = principal_axes(m, rec)
    c = np.array(rec.centroid[:2])
    vec = {"left": -major * (a + offset), "right": major * (a + offset),
           "front": minor * (b + offset), "behind": -minor * (b + offset)}[side]
    p = c + vec
    return float(p[0]), float(p[1])


_SIDES = {"move_to_left_of": "left", "move_to_right_of": "right",
          "move_in_front_of": "front", "move_behind": "behind"}

GOAL_PRIMITIVES = frozenset({
    "move_to_object", "move_to_instance", "move_to_nth_closest", "move_to_nth_in_view",
    "move_to_closest", "move_to_farthest", "move_between", "move_between_instances",
    "move_within", "move_to_point", *_SIDES,
})


def resolve_targets(m: SIMap, call: PrimitiveCall, agent: AgentState, cfg: NavConfig):
    """Instances (and reference point) a goal-directed call refers to, without
    looking at navigability."""
    name, a = call.name, call.args
    if name == "move_to_instance" or name == "move_within":
        return [_get_instance(m, a[0], a[1])], None
    if name in ("move_to_nth_closest", "move_to_closest", "move_to_farthest"):
        ranked = _ranked(m, a[0], agent)
        if name == "move_to_closest":
            return [_pick(ranked, 1, f"closest {a[0]!r}")], None
        if name == "move_to_farthest":
            return [_pick(ranked, len(ranked) or 1, f"farthest {a[0]!r}")], None
        return [_pick(ranked, a[1], f"closest {a[0]!r}")], None
    if name == "move_to_nth_in_view":
        visible = in_view(_ranked(m, a[0], agent), agent, cfg.fov_half_angle_deg)
        if not visible:
            raise EmptyView(f"no {a[0]!r} inside the field of view")
        return [_pick(visible, a[1], f"{a[0]!r} in view")], None
    if name in ("move_between", "move_between_instances"):
        if name == "move_between":
            r1, r2 = _get_instance(m, a[0], a[1]), _get_instance(m, a[2], a[3])
        else:
            r1, r2 = _get_instance(m, a[0], a[1]), _get_instance(m, a[0], a[2])
        mid = ((r1.centroid[0] + r2.centroid[0]) / 2, (r1.centroid[1] + r2.centroid[1]) / 2)
        return [r1, r2], mid
    if name in _SIDES:
        rec = _get_instance(m, a[0], a[1])
        return [rec], side_point(m, rec, _SIDES[name], cfg.stop_radius)
    if name == "move_to_point":
        return [], (a[0], a[1])
    if name == "move_to_object":
        cid = class_id_of(m, a[0])
        mask = m.class_id == cid
        if not mask.any():
            raise NoSuchInstance(f"no {a[0]!r} in the map")
        return [], None
    raise ValueError(f"{name} is not a goal-directed primitive")


def resolve_goal(m: SIMap, call: PrimitiveCall, agent: AgentState, cfg: NavConfig,
                 occ: OccupancyView | None = None) -> Goal:
    occ = occupancy_for(m, cfg) if occ is None else occ
    free = occ.free
    targets, point = resolve_targets(m, call, agent, cfg)
    name = call.name
    if name == "move_to_object":
        mask = m.class_id == class_id_of(m, call.args[0])
        return Goal(_near_mask(m, mask, cfg.stop_radius) & free)
    if name == "move_within":
        rec = targets[0]
        return Goal(_near_mask(m, m.footprint(rec.class_id, rec.t), call.args[2]) & free, targets)
    if point is None:
        rec = targets[0]
        return Goal(_near_mask(m, m.footprint(rec.class_id, rec.t), cfg.stop_radius) & free, targets)
    # point goals snap to the nearest navigable cell the agent can reach
    try:
        reach = reachable_from(occ, agent_cell(m, agent)) & free
    except Unreachable:
        reach = free
    return Goal(_nearest_cell(m, reach, point), targets, point)


# -- execution -------------------------------------------------------------

class _Runner:
    def __init__(self, m: SIMap, start: AgentState, cfg: NavConfig):
        self.m, self.cfg, self.start = m, cfg, start
        self.occ = occupancy_for(m, cfg)
        self.state = start
        self.traj = Trajectory()
        self.traj.add_pose(start.x, start.y, start.heading)

    def follow(self, cells: Sequence[GridCell], final_xy=None, keep_heading=False):
        heading = self.state.heading
        for prev, cur in zip(cells, cells[1:]):
            if not keep_heading:
                heading = math.atan2(cur.row - prev.row, cur.col - prev.col)
            x, y = self.m.cfg.cell_center(cur.row, cur.col)
            self.traj.add_pose(float(x), float(y), normalize_heading(heading))
        if final_xy is not None:
            x, y = final_xy
        elif len(cells) > 1:
            x, y = (float(v) for v in self.m.cfg.cell_center(cells[-1].row, cells[-1].col))
        else:
            x, y = self.state.x, self.state.y
        if (x, y) != (self.traj.records[-1]["x"], self.traj.records[-1]["y"]):
            self.traj.add_pose(x, y, normalize_heading(heading))
        self.state = AgentState(float(x), float(y), heading)

    def goto_point(self, xy, keep_heading=True):
        r, c, ok = grid_indices(xy[0], xy[1], self.m.cfg)
        if not ok or not self.occ.free[int(r), int(c)]:
            raise Unreachable(f"target point ({xy[0]:.3f}, {xy[1]:.3f}) is not navigable")
        path = plan_path(self.occ, agent_cell(self.m, self.state), [(int(r), int(c))])
        self.follow(path.cells, xy, keep_heading)

    def turn_to(self, heading):
        self.state = AgentState(self.state.x, self.state.y, heading)
        self.traj.add_pose(self.state.x, self.state.y, self.state.heading)

    def face(self, rec: InstanceRecord):
        dx, dy = rec.centroid[0] - self.state.x, rec.centroid[1] - self.state.y
        self.turn_to(math.atan2(dy, dx) if (dx or dy) else self.state.heading)

    def run_call(self, call: PrimitiveCall):
        name, a = call.name, call.args
        st = self.state
        if name in GOAL_PRIMITIVES:
            goal = resolve_goal(self.m, call, st, self.cfg, self.occ)
            ev = {"type": "goal_resolved", "call": str(call), "n_cells": int(goal.cells.sum())}
            if goal.targets:
                ev["instances"] = [[r.class_id, r.t] for r in goal.targets]
            if goal.point is not None:
                ev["point"] = [goal.point[0], goal.point[1]]
            self.traj.add_event(ev)
            rows, cols = np.nonzero(goal.cells)
            path = plan_path(self.occ, agent_cell(self.m, st), zip(rows.tolist(), cols.tolist()))
            self.follow(path.cells)
            self.traj.add_event({"type": "goal_reached", "call": str(call), "cost": path.cost})
        elif name == "turn_left":
            self.turn_to(st.heading + math.radians(a[0]))
        elif name == "turn_right":
            self.turn_to(st.heading - math.radians(a[0]))
        elif name == "turn_to_heading":
            self.turn_to(math.radians(a[0]))
        elif name in ("move_forward", "move_backward"):
            sign = 1.0 if name == "move_forward" else -1.0
            d = sign * a[0]
            self.goto_point((st.x + d * math.cos(st.heading), st.y + d * math.sin(st.heading)))
        elif name == "return_to_start":
            self.goto_point(self.start.xy, keep_heading=False)
        elif name == "face_object":
            self.face(_pick(_ranked(self.m, a[0], st), 1, f"closest {a[0]!r}"))
        elif name == "face_instance":
            self.face(_get_instance(self.m, a[0], a[1]))
        elif name == "stop":
            pass
        else:
            raise ValueError(f"primitive {name} has no executor")


def execute(prog: Program, m: SIMap, start: AgentState, cfg: NavConfig = NavConfig()) -> Trajectory:
    """Run calls in order; the first failing call ends the episode with a failure event."""
    runner = _Runner(m, start, cfg)
    traj = runner.traj
    for call in prog:
        traj.add_event({"type": "call_started", "call": str(call), "line": call.line})
        try:
            runner.run_call(call)
        except NavError as e:
            traj.failed = True
            traj.error = f"{type(e).__name__}: {e}"
            traj.add_event({"type": "failure", "call": str(call), "error": type(e).__name__,
                            "message": str(e)})
            break
        traj.completed_calls += 1
    return traj
