import json
import os
import shutil

import numpy as np
import pytest

from simaps import simap as simap_io
from simaps.cli import main, palette
from simaps.projection import MapConfig
from simaps.simap import SIMap, empty_map


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = str(tmp_path_factory.mktemp("cli") / "scene")
    assert main(["synth", d, "--seed", "3", "--n-objects", "4", "--frames", "30", "--max-rank", "2"]) == 0
    return d


@pytest.fixture(scope="module")
def built(synth_dir):
    out = os.path.join(os.path.dirname(synth_dir), "built.simap")
    assert main(["build", synth_dir, out, "--config", os.path.join(synth_dir, "map.ini")]) == 0
    return out


def test_synth_outputs(synth_dir):
    for name in ("intrinsics.txt", "scene.json", "truth.simap", "truth.meta.json", "episodes.jsonl",
                 "map.ini"):
        assert os.path.exists(os.path.join(synth_dir, name)), name


def test_synth_is_deterministic(synth_dir, tmp_path):
    again = str(tmp_path / "again")
    assert main(["synth", again, "--seed", "3", "--n-objects", "4", "--frames", "30", "--max-rank", "2"]) == 0
    for name in ("scene.json", "truth.simap", "episodes.jsonl"):
        with open(os.path.join(synth_dir, name), "rb") as a, open(os.path.join(again, name), "rb") as b:
            assert a.read() == b.read()


def test_synth_touching_and_infeasible(tmp_path, capsys):
    d = str(tmp_path / "t")
    assert main(["synth", d, "--n-objects", "4", "--classes", "1", "--touching-pairs", "2",
                 "--min-gap", "1.0", "--frames", "2"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert len(info["touching"]) == 2
    assert main(["synth", str(tmp_path / "x"), "--n-objects", "60", "--extent", "2", "2",
                 "--frames", "1"]) == 2


def test_build_stats_and_determinism(synth_dir, built, tmp_path, capsys):
    m = simap_io.load(built)
    assert m.catalog is not None and len(m.instance_keys()) == 4
    other = str(tmp_path / "threads.simap")
    capsys.readouterr()
    assert main(["build", synth_dir, other, "--config", os.path.join(synth_dir, "map.ini"),
                 "--threads", "3", "--k-merge", "9"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert sum(info["instances"].values()) == 4 and "timings" in info
    with open(built, "rb") as a, open(other, "rb") as b:
        assert a.read() == b.read()


def test_build_missing_intrinsics(synth_dir, tmp_path, capsys):
    broken = str(tmp_path / "broken")
    shutil.copytree(synth_dir, broken)
    os.remove(os.path.join(broken, "intrinsics.txt"))
    assert main(["build", broken, str(tmp_path / "o.simap")]) == 2
    assert "MissingFile" in capsys.readouterr().err


def test_build_bad_config(synth_dir, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[merge]\nbogus = 1\n")
    assert main(["build", synth_dir, str(tmp_path / "o.simap"), "--config", str(cfg)]) == 2


def test_nav_exit_codes(built, synth_dir, tmp_path, capsys):
    ok = tmp_path / "ok.txt"
    with open(os.path.join(synth_dir, "scene.json")) as fh:
        scene = json.load(fh)
    names = {1: "chair", 2: "table", 3: "sofa", 4: "cabinet", 5: "plant"}
    ok.write_text('move_to_nth_closest("%s", 1)\nturn_left(90)\n' % names[scene["boxes"][0]["class_id"]])
    capsys.readouterr()
    assert main(["nav", built, str(ok), "--x", "0.3", "--y", "0.3", "--void-navigable"]) == 0
    lines = capsys.readouterr().out.splitlines()
    recs = [json.loads(s) for s in lines]
    assert recs[0]["step"] == 0 and any(r.get("event", {}).get("type") == "goal_reached" for r in recs)

    far = tmp_path / "far.txt"
    far.write_text("move_to_point(0.3, 0.3)\nmove_to_point(0.3, 0.3)\n")
    # fenced in by VOID cells: the start is not navigable without --void-navigable
    assert main(["nav", built, str(far), "--x", "-0.5", "--y", "-0.5"]) == 3
    out = capsys.readouterr()
    assert '"failure"' in out.out and "Unreachable" in out.err

    bad = tmp_path / "bad.txt"
    bad.write_text("stop()\nmove_to(chair)\n")
    assert main(["nav", built, str(bad)]) == 2
    assert "line 2, column 9" in capsys.readouterr().err


def test_nav_writes_out_file(built, tmp_path):
    prog = tmp_path / "p.txt"
    prog.write_text("turn_left(90)\nstop()\n")
    out = tmp_path / "traj.jsonl"
    assert main(["nav", built, str(prog), "--x", "0.3", "--y", "0.3", "--out", str(out)]) == 0
    recs = [json.loads(s) for s in out.read_text().splitlines()]
    assert recs[-1]["heading"] == pytest.approx(np.pi / 2)


def test_eval_pred_equals_truth(synth_dir, capsys):
    truth = os.path.join(synth_dir, "truth.simap")
    assert main(["eval", truth, truth]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["pq"]["si"]["mean"] == 1.0


def test_eval_both_methods_with_episodes(synth_dir, built, capsys):
    truth = os.path.join(synth_dir, "truth.simap")
    assert main(["eval", built, truth, "--episodes", os.path.join(synth_dir, "episodes.jsonl"),
                 "--method", "both", "--config", os.path.join(synth_dir, "map.ini")]) == 0
    out = capsys.readouterr()
    rep = json.loads(out.out)
    assert set(rep["success_rate"]) == {"si", "cc"} and "cc" in rep["deltas"]
    assert rep["success_rate"]["si"] >= 0.9
    assert "Success Rate" in out.err


def test_eval_mismatched_scale(synth_dir, tmp_path):
    truth = os.path.join(synth_dir, "truth.simap")
    m = simap_io.load(truth)
    other = SIMap(MapConfig(height=m.cfg.height, width=m.cfg.width, scale=0.1,
                            origin_x=m.cfg.origin_x, origin_y=m.cfg.origin_y),
                  m.class_id, m.instance, catalog=m.catalog)
    p = str(tmp_path / "other.simap")
    simap_io.save(other, p)
    assert main(["eval", p, truth]) == 2


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic, dims, maxval, rest = data.split(b"\n", 3)
    w, h = map(int, dims.split())
    assert magic == b"P6" and maxval == b"255"
    return np.frombuffer(rest, np.uint8).reshape(h, w, 3)


def test_inspect_colors(built, tmp_path, capsys):
    prefix = str(tmp_path / "img")
    capsys.readouterr()
    assert main(["inspect", built, "--ppm", prefix]) == 0
    info = json.loads(capsys.readouterr().out)
    m = simap_io.load(built)
    assert sum(info["instances"].values()) == len(m.instance_keys())
    inst = read_ppm(prefix + "_instances.ppm")
    colors = {tuple(c) for c in inst.reshape(-1, 3)} - {(0, 0, 0)}
    assert len(colors) == len(m.instance_keys())


def test_inspect_empty_map(tmp_path, capsys):
    p = str(tmp_path / "empty.simap")
    simap_io.save(empty_map(MapConfig(height=4, width=5)), p)
    assert main(["inspect", p]) == 0
    img = read_ppm(str(tmp_path / "empty_classes.ppm"))
    assert img.shape == (4, 5, 3) and not img.any()


def test_palette_distinct():
    p = palette(50)
    assert len({tuple(c) for c in p}) == 50 and tuple(p[0]) == (0, 0, 0)


def test_missing_map_file(tmp_path, capsys):
    assert main(["inspect", str(tmp_path / "none.simap")]) == 2
    p = tmp_path / "junk.simap"
    p.write_bytes(b"garbage!")
    assert main(["inspect", str(p)]) == 2
