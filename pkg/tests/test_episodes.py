import numpy as np
import pytest

from simaps.episodes import (
    Episode,
    corner_starts,
    ground_call,
    ground_instance,
    load_episodes,
    run_episode,
    save_episodes,
    standard_suite,
    truth_target,
)
from simaps.errors import NoSuchInstance
from simaps.nav import AgentState, NavConfig, make_call
from simaps.projection import MapConfig
from simaps.scene_io import ClassCatalog
from simaps.simap import SIMap
from simaps.synthworld import SceneTruth

CAT = ClassCatalog.from_tuples([(0, "floor", "stuff"), (1, "chair", "thing")])
NAV = NavConfig(void_navigable=True)


def two_chairs():
    cfg = MapConfig(height=40, width=40, scale=0.1)
    cls = np.zeros((40, 40), int)
    inst = np.zeros((40, 40), int)
    cls[5:8, 5:8], inst[5:8, 5:8] = 1, 1
    cls[30:33, 30:33], inst[30:33, 30:33] = 1, 2
    return SceneTruth(SIMap(cfg, cls, inst, catalog=CAT), {(1, 1): 10, (1, 2): 20})


def swapped(truth):
    m = truth.map
    inst = m.instance.copy()
    inst[m.instance == 1], inst[m.instance == 2] = 2, 1
    return SIMap(m.cfg, m.class_id, inst, catalog=CAT)


def test_episode_json_round_trip(tmp_path):
    eps = [Episode('move_to_instance("chair", 2)', AgentState(1.0, 2.0, 0.5)),
           Episode('move_to_nth_closest("chair", 1)', AgentState(0.5, 0.5))]
    p = str(tmp_path / "e.jsonl")
    save_episodes(eps, p)
    assert load_episodes(p) == eps


def test_grounding_follows_overlap():
    truth = two_chairs()
    pred = swapped(truth)
    assert ground_instance(pred, truth, 1, 1) == 2
    call = ground_call(make_call("move_between_instances", "chair", 1, 2), pred, truth)
    assert call.args == ("chair", 2, 1)
    empty = SIMap(truth.map.cfg, truth.map.class_id, np.zeros((40, 40), int), catalog=CAT)
    with pytest.raises(NoSuchInstance):
        ground_call(make_call("move_to_instance", "chair", 1), empty, truth)


def test_truth_target_kinds():
    truth = two_chairs()
    pts, cid, uid = truth_target(truth, make_call("move_to_instance", "chair", 2), AgentState(1, 1), NAV)
    assert len(pts) == 9 and cid == 1 and uid == 20
    pts, _, uid = truth_target(truth, make_call("move_between_instances", "chair", 1, 2), AgentState(1, 1), NAV)
    assert pts.shape == (1, 2) and uid is None


def test_run_episode_success_on_renumbered_map():
    truth = two_chairs()
    ep = Episode('move_to_instance("chair", 2)', AgentState(2.0, 0.5))
    res = run_episode(ep, swapped(truth), truth, NAV)
    assert res.success and res.target_uid == 20


def test_run_episode_failure_recorded():
    truth = two_chairs()
    empty = SIMap(truth.map.cfg, truth.map.class_id, np.zeros((40, 40), int), catalog=CAT)
    res = run_episode(Episode('move_to_instance("chair", 1)', AgentState(2.0, 0.5)), empty, truth, NAV)
    assert not res.success and res.error.startswith("NoSuchInstance")


def test_suite_is_deterministic_and_resolvable():
    truth = two_chairs()
    starts = corner_starts((4.0, 4.0))
    a = standard_suite(truth, [1], starts)
    assert a == standard_suite(truth, [1], starts)
    assert all(run_episode(e, truth.map, truth, NAV).success for e in a)
    assert {e.call.name for e in a} >= {"move_to_nth_closest", "move_to_instance", "move_to_nth_in_view"}


def test_corner_starts_face_center():
    starts = corner_starts((4.0, 2.0), inset=0.5)
    assert starts[0].xy == (0.5, 0.5)
    for s in starts:
        assert np.cos(s.heading) * (2.0 - s.x) + np.sin(s.heading) * (1.0 - s.y) > 0
