import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simaps.errors import EmptyView, NoSuchInstance, NotEnoughInstances, Unreachable
from simaps.nav import (
    AgentState,
    NavConfig,
    execute,
    make_call,
    parse_program,
    resolve_goal,
    resolve_targets,
)
from simaps.nav.executor import normalize_heading, principal_axes, side_point
from simaps.projection import MapConfig
from simaps.scene_io import ClassCatalog
from simaps.simap import SIMap, instance

CAT = ClassCatalog.from_tuples([(0, "floor", "stuff"), (1, "chair", "thing"), (2, "table", "thing")])
CFG = MapConfig(height=100, width=100, scale=0.1, origin_x=-5.0, origin_y=-5.0)


def floor_map():
    return SIMap(CFG, np.zeros(CFG.shape), np.zeros(CFG.shape), catalog=CAT)


def put(m, cls, t, x, y, half=0.1):
    """Axis-aligned block of cells centered near (x, y) with half-size ``half`` metres."""
    xs, ys = CFG.cell_center(*np.mgrid[0:CFG.height, 0:CFG.width])
    sel = (np.abs(xs - x) < half) & (np.abs(ys - y) < half)
    m.class_id[sel] = cls
    m.instance[sel] = t


def test_normalize_heading_range():
    assert normalize_heading(math.pi) == -math.pi
    assert normalize_heading(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert AgentState(0, 0, 2 * math.pi).heading == pytest.approx(0.0)


def test_turn_then_forward():
    traj = execute(parse_program("turn_left(90)\nmove_forward(1.0)"), floor_map(), AgentState(0.0, 0.0, 0.0))
    f = traj.final
    assert not traj.failed and traj.completed_calls == 2
    assert f.x == pytest.approx(0.0, abs=1e-9) and f.y == pytest.approx(1.0)
    assert f.heading == pytest.approx(math.pi / 2)


def test_turns_and_backward():
    prog = parse_program("turn_right(90)\nturn_to_heading(180)\nmove_backward(1.5)\nturn_left(30)")
    f = execute(prog, floor_map(), AgentState(0.0, 0.0)).final
    assert (f.x, f.y) == pytest.approx((1.5, 0.0))
    assert f.heading == pytest.approx(normalize_heading(math.pi + math.radians(30)))


def test_move_to_instance_ends_within_stop_radius():
    m = floor_map()
    put(m, 1, 1, 2.0, 1.0, half=0.2)
    traj = execute(parse_program('move_to_instance("chair", 1)'), m, AgentState(-3.0, -3.0))
    assert not traj.failed
    rec = instance(m, 1, 1)
    d = np.hypot(*(rec.footprint_xy(CFG) - traj.final.xy).T).min()
    assert d <= NavConfig().stop_radius + 1e-9
    kinds = [e["type"] for e in traj.events()]
    assert kinds == ["call_started", "goal_resolved", "goal_reached"]


def test_second_call_failure_keeps_partial_trajectory():
    m = floor_map()
    put(m, 1, 1, 2.0, 1.0)
    prog = parse_program('move_to_instance("chair", 1)\nmove_to_instance("chair", 9)\nstop()')
    traj = execute(prog, m, AgentState(0.0, 0.0))
    assert traj.failed and traj.completed_calls == 1
    ev = traj.events()[-1]
    assert ev["type"] == "failure" and ev["error"] == "NoSuchInstance"
    assert sum(e["type"] == "call_started" for e in traj.events()) == 2


def test_in_view_excludes_chairs_behind():
    m = floor_map()
    for t, x in ((1, 1.0), (2, 2.0), (3, 3.0), (4, -1.5)):
        put(m, 1, t, x, 0.0)
    agent = AgentState(0.0, 0.0, 0.0)
    recs, _ = resolve_targets(m, make_call("move_to_nth_in_view", "chair", 3), agent, NavConfig())
    assert recs[0].t == 3
    with pytest.raises(NotEnoughInstances):
        resolve_targets(m, make_call("move_to_nth_in_view", "chair", 4), agent, NavConfig())
    recs, _ = resolve_targets(m, make_call("move_to_nth_closest", "chair", 2), agent, NavConfig())
    assert recs[0].t == 4
    with pytest.raises(EmptyView):
        resolve_targets(m, make_call("move_to_nth_in_view", "chair", 1),
                        AgentState(-4.0, 0.0, math.pi), NavConfig())


def test_move_between_midpoint():
    m = floor_map()
    put(m, 1, 1, 0.0, 0.0)
    put(m, 2, 1, 2.0, 0.0)
    call = make_call("move_between", "chair", 1, "table", 1)
    recs, mid = resolve_targets(m, call, AgentState(-3, -3), NavConfig())
    assert [r.centroid[:2] for r in recs] == [pytest.approx((0.0, 0.0)), pytest.approx((2.0, 0.0))]
    assert mid == pytest.approx((1.0, 0.0))
    goal = resolve_goal(m, call, AgentState(-3, -3), NavConfig())
    (r, c), = zip(*np.nonzero(goal.cells))
    assert np.hypot(*np.subtract(CFG.cell_center(r, c), mid)) <= 0.1


def test_unknown_instance_and_class():
    m = floor_map()
    put(m, 1, 1, 1.0, 1.0)
    with pytest.raises(NoSuchInstance):
        resolve_targets(m, make_call("move_to_instance", "chair", 9), AgentState(0, 0), NavConfig())
    with pytest.raises(NoSuchInstance):
        resolve_targets(m, make_call("move_to_object", "table"), AgentState(0, 0), NavConfig())
    with pytest.raises(NoSuchInstance):
        resolve_targets(m, make_call("move_to_object", "lamp"), AgentState(0, 0), NavConfig())


def test_enclosed_target_fails_unreachable():
    m = floor_map()
    put(m, 1, 1, 0.0, 0.0, half=1.0)
    put(m, 0, 0, 0.0, 0.0, half=0.6)  # floor pocket inside a ring of chair cells
    put(m, 2, 1, 0.0, 0.0, half=0.1)
    goal = resolve_goal(m, make_call("move_to_instance", "table", 1), AgentState(3.0, 3.0), NavConfig())
    assert goal.cells.any()
    traj = execute(parse_program('move_to_instance("table", 1)'), m, AgentState(3.0, 3.0))
    assert traj.failed and traj.events()[-1]["error"] == "Unreachable"


def test_start_outside_map():
    traj = execute(parse_program('move_to_object("chair")'), floor_map(), AgentState(50.0, 0.0))
    assert traj.failed


def test_closest_farthest_and_face():
    m = floor_map()
    put(m, 1, 1, 1.0, 0.0)
    put(m, 1, 2, -3.0, 0.0)
    agent = AgentState(0.0, 0.0)
    assert resolve_targets(m, make_call("move_to_closest", "chair"), agent, NavConfig())[0][0].t == 1
    assert resolve_targets(m, make_call("move_to_farthest", "chair"), agent, NavConfig())[0][0].t == 2
    c2 = instance(m, 1, 2).centroid
    f = execute(parse_program('face_instance("chair", 2)'), m, AgentState(0.0, 0.0)).final
    assert f.heading == pytest.approx(normalize_heading(math.atan2(c2[1], c2[0]))) and abs(f.heading) > 3.1
    c1 = instance(m, 1, 1).centroid
    f = execute(parse_program('face_object("chair")'), m, AgentState(0.0, 0.0, 1.0)).final
    assert f.heading == pytest.approx(math.atan2(c1[1], c1[0])) and abs(f.heading) < 0.05


def test_side_goals_use_principal_axes():
    m = floor_map()
    put(m, 1, 1, 0.0, 0.0, half=0.1)
    xs, ys = CFG.cell_center(*np.mgrid[0:CFG.height, 0:CFG.width])
    sofa = (np.abs(xs) < 1.0) & (np.abs(ys - 2.0) < 0.2)
    m.class_id[sofa], m.instance[sofa] = 2, 1
    rec = instance(m, 2, 1)
    major, minor, a, b = principal_axes(m, rec)
    assert major == pytest.approx([1.0, 0.0]) and minor == pytest.approx([0.0, 1.0])
    assert a == pytest.approx(1.0) and b == pytest.approx(0.2)
    assert side_point(m, rec, "right", 0.5) == pytest.approx((1.5, 2.0))
    assert side_point(m, rec, "left", 0.5) == pytest.approx((-1.5, 2.0))
    assert side_point(m, rec, "front", 0.5) == pytest.approx((0.0, 2.7))
    assert side_point(m, rec, "behind", 0.5) == pytest.approx((0.0, 1.3))


def test_move_within_and_return_to_start():
    m = floor_map()
    put(m, 1, 1, 2.0, 2.0)
    prog = parse_program('move_within("chair", 1, 1.5)\nreturn_to_start()\nstop()')
    traj = execute(prog, m, AgentState(-2.0, -2.0))
    assert not traj.failed and traj.completed_calls == 3
    assert traj.final.xy == pytest.approx((-2.0, -2.0))


def adjacent_or_rotation(traj, cfg):
    recs = traj.records
    for a, b in zip(recs, recs[1:]):
        ca = (math.floor((a["y"] - cfg.origin_y) / cfg.scale), math.floor((a["x"] - cfg.origin_x) / cfg.scale))
        cb = (math.floor((b["y"] - cfg.origin_y) / cfg.scale), math.floor((b["x"] - cfg.origin_x) / cfg.scale))
        if max(abs(ca[0] - cb[0]), abs(ca[1] - cb[1])) > 1:
            return False
    return True


@given(st.integers(0, 2**32 - 1))
def test_trajectory_steps_are_adjacent(seed):
    rng = np.random.default_rng(seed)
    m = floor_map()
    corners = rng.permutation([(-2.0, -2.0), (-2.0, 2.0), (2.0, -2.0), (2.0, 2.0)])
    for t, (cx, cy) in zip(range(1, 4), corners):
        put(m, 1, t, cx + rng.uniform(-1, 1), cy + rng.uniform(-1, 1), half=0.15)
    prog = parse_program('move_to_nth_closest("chair", 2)\nturn_left(45)\nmove_forward(0.7)\n'
                         'move_between_instances("chair", 1, 3)\nreturn_to_start()')
    traj = execute(prog, m, AgentState(*rng.uniform(-4, 4, 2), rng.uniform(-3, 3)))
    assert adjacent_or_rotation(traj, CFG)
    lines = traj.to_jsonl().splitlines()
    assert [json.loads(s)["step"] for s in lines] == list(range(len(lines)))


@given(st.integers(0, 2**32 - 1), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_global_goals_do_not_depend_on_heading(seed, h1, h2):
    rng = np.random.default_rng(seed)
    m = floor_map()
    # one object per quadrant so footprints never overlap
    corners = rng.permutation([(-2.0, -2.0), (-2.0, 2.0), (2.0, -2.0), (2.0, 2.0)])
    for (cls, t), (cx, cy) in zip(((1, 1), (1, 2), (2, 1)), corners):
        put(m, cls, t, cx + rng.uniform(-1, 1), cy + rng.uniform(-1, 1), half=0.2)
    xy = rng.uniform(-4, 4, 2)
    for call in (make_call("move_to_instance", "chair", 1), make_call("move_between", "chair", 2, "table", 1),
                 make_call("move_between_instances", "chair", 1, 2)):
        a = resolve_goal(m, call, AgentState(*xy, h1), NavConfig())
        b = resolve_goal(m, call, AgentState(*xy, h2), NavConfig())
        assert np.array_equal(a.cells, b.cells)


def test_unreachable_start_cell_lookup():
    from simaps.nav.executor import agent_cell
    with pytest.raises(Unreachable):
        agent_cell(floor_map(), AgentState(-6.0, 0.0))
