import time
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from simaps.pipeline import BuildConfig, BuildResult, baseline_map, build_map
from simaps.scene_io import Dataset
from simaps.simap import SIMap
from simaps.synthworld import (
    DEFAULT_INTRINSICS,
    SYNTH_CATALOG,
    SceneParams,
    SceneSpec,
    SceneTruth,
    camera_trajectory,
    generate_scene,
    render_dataset,
    scene_map_config,
    truth_map,
)

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SEPARATED = SceneParams(n_objects=10, extent=(6.0, 6.0), min_gap=0.3)
TOUCHING = SceneParams(n_objects=6, classes=(1,), extent=(6.0, 6.0), min_gap=1.0,
                       mode="touching", touching_pairs=3)
SCENE_SEED = 1
N_FRAMES = 60


@dataclass
class SceneRun:
    scene: SceneSpec
    dataset: Dataset
    result: BuildResult
    truth: SceneTruth
    cc: SIMap
    build_seconds: float
    pipeline_seconds: float   # render + build, single-threaded


def run_scene(params: SceneParams, seed: int = SCENE_SEED, n_frames: int = N_FRAMES,
              k_percent: float = 5.0) -> SceneRun:
    from simaps.community import MergeConfig

    t0 = time.perf_counter()
    scene = generate_scene(params, seed)
    frames = render_dataset(scene, camera_trajectory(scene, n_frames, "orbit", seed), DEFAULT_INTRINSICS)
    ds = Dataset(DEFAULT_INTRINSICS, SYNTH_CATALOG, tuple(frames))
    t1 = time.perf_counter()
    cfg = BuildConfig(map=scene_map_config(scene), auto_size=False,
                      merge=MergeConfig(k_percent=k_percent))
    res = build_map(ds, cfg)
    t2 = time.perf_counter()
    truth = truth_map(scene, res.simap.cfg)
    cc = baseline_map(res.grid, SYNTH_CATALOG)
    return SceneRun(scene, ds, res, truth, cc, t2 - t1, t2 - t0)


@pytest.fixture(scope="session")
def separated_run() -> SceneRun:
    return run_scene(SEPARATED)


@pytest.fixture(scope="session")
def touching_run() -> SceneRun:
    return run_scene(TOUCHING)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
