"""Instance-specific navigation episodes scored against a synthetic ground truth.

An episode is a one-call program plus a start pose. Its target is obtained by
resolving the same call on the truth map from the same pose, so the truth and
the map under test share one definition of every primitive. Explicit instance
indices are written in truth numbering and rewritten per map to the predicted
instance that overlaps the true footprint most.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NavError, NoSuchInstance
from .evaluation import DEFAULT_TAU, EpisodeResult, auto_success
from .nav.dsl import PrimitiveCall, make_call, parse_program
from .nav.executor import AgentState, NavConfig, class_id_of, execute, resolve_targets
from .simap import SIMap
from .synthworld import SceneTruth

# argument positions that hold an explicit instance index, per primitive
_INSTANCE_ARGS = {
    "move_to_instance": ((0, 1),),
    "move_to_left_of": ((0, 1),),
    "move_to_right_of": ((0, 1),),
    "move_in_front_of": ((0, 1),),
    "move_behind": ((0, 1),),
    "move_within": ((0, 1),),
    "face_instance": ((0, 1),),
    "move_between": ((0, 1), (2, 3)),
    "move_between_instances": ((0, 1), (0, 2)),
}


@dataclass(frozen=True)
class Episode:
    command: str          # one DSL call, truth numbering for explicit indices
    start: AgentState

    @property
    def call(self) -> PrimitiveCall:
        return parse_program(self.command).calls[0]

    def to_json(self) -> dict:
        return {"command": self.command, "x": self.start.x, "y": self.start.y,
                "heading": self.start.heading}

    @classmethod
    def from_json(cls, d: dict) -> "Episode":
        return cls(d["command"], AgentState(float(d["x"]), float(d["y"]), float(d.get("heading", 0.0))))


def load_episodes(path: str) -> list[Episode]:
    with open(path) as fh:
        return [Episode.from_json(json.loads(line)) for line in fh if line.strip()]


def save_episodes(episodes, path: str) -> None:
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_json(), sort_keys=True) + "\n")


def truth_target(truth: SceneTruth, call: PrimitiveCall, agent: AgentState, cfg: NavConfig):
    """(target points, class id, uid or None) for a goal-directed call on the truth map.

    Instance goals yield every footprint cell center; point goals yield the point.
    """
    recs, point = resolve_targets(truth.map, call, agent, cfg)
    cid = class_id_of(truth.map, call.args[0]) if call.args and isinstance(call.args[0], str) else -1
    if point is not None:
        return np.array([point]), cid, None
    rec = recs[0]
    return rec.footprint_xy(truth.map.cfg), cid, truth.uid_of.get((rec.class_id, rec.t))


def ground_instance(pred: SIMap, truth: SceneTruth, class_id: int, t_truth: int) -> int:
    """Predicted index covering most of the true footprint (0 when none overlaps)."""
    fp = truth.map.footprint(class_id, t_truth)
    cand = pred.instance[fp & (pred.class_id == class_id) & (pred.instance > 0)]
    if cand.size == 0:
        return 0
    ids, counts = np.unique(cand, return_counts=True)
    return int(ids[np.argmax(counts)])  # np.argmax keeps the lowest id on ties


def ground_call(call: PrimitiveCall, pred: SIMap, truth: SceneTruth) -> PrimitiveCall:
    slots = _INSTANCE_ARGS.get(call.name)
    if not slots:
        return call
    args = list(call.args)
    for ci, ti in slots:
        t = ground_instance(pred, truth, class_id_of(truth.map, call.args[ci]), call.args[ti])
        if t == 0:
            raise NoSuchInstance(f"{call.args[ci]!r} {call.args[ti]} has no counterpart in the map")
        args[ti] = t
    return replace(call, args=tuple(args))


def run_episode(ep: Episode, pred: SIMap, truth: SceneTruth, cfg: NavConfig = NavConfig(),
                tau: float = DEFAULT_TAU) -> EpisodeResult:
    call = ep.call
    target_xy, cid, uid = truth_target(truth, call, ep.start, cfg)
    res = EpisodeResult(ep.command, ep.start.xy, cid, uid)
    try:
        grounded = ground_call(call, pred, truth)
    except NoSuchInstance as e:
        res.error = f"NoSuchInstance: {e}"
        return res
    traj = execute(parse_program(str(grounded)), pred, ep.start, cfg)
    final = traj.final
    res.final_xy = final.xy
    if traj.failed:
        res.error = traj.error
        return res
    res.success = auto_success(final.xy, target_xy, tau)
    return res


def standard_suite(truth: SceneTruth, class_ids, starts, max_rank: int | None = None,
                   fov_deg: float = 60.0) -> list[Episode]:
    """A fixed, deterministic command suite: nth-closest, nth-in-view, between
    and explicit-instance commands for each class in ``class_ids`` from each
    start pose. Only commands that resolve on the truth map are kept."""
    m = truth.map
    names = {c: m.catalog.get(c).name for c in class_ids}
    cfg = NavConfig(fov_half_angle_deg=fov_deg)
    eps = []

    def keep(cmd, start):
        try:
            resolve_targets(m, parse_program(cmd).calls[0], start, cfg)
        except NavError:
            return
        eps.append(Episode(cmd, start))

    for c in class_ids:
        keys = sorted(t for cc, t in m.instance_keys() if cc == c)
        n = len(keys) if max_rank is None else min(len(keys), max_rank)
        name = names[c]
        for si, st in enumerate(starts):
            for k in range(1, n + 1):
                keep(str(make_call("move_to_nth_closest", name, k)), st)
            keep(str(make_call("move_to_nth_in_view", name, 1 + si % max(1, n // 2))), st)
        for t in keys:
            keep(str(make_call("move_to_instance", name, t)), starts[t % len(starts)])
        # pair every other instance with the one half the list away
        for i in range(0, len(keys) - 1, 2):
            a, b = keys[i], keys[(i + len(keys) // 2) % len(keys)]
            if a != b:
                keep(str(make_call("move_between_instances", name, a, b)), starts[i % len(starts)])
    return eps


def corner_starts(extent, inset: float = 0.3):
    """Agent poses near the four floor corners, each facing the floor center."""
    ex, ey = extent
    out = []
    for x, y in ((inset, inset), (ex - inset, inset), (ex - inset, ey - inset), (inset, ey - inset)):
        out.append(AgentState(x, y, math.atan2(ey / 2 - y, ex / 2 - x)))
    return out
