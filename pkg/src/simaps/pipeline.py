"""End-to-end map building: frames -> semantic grid -> class graphs -> instances -> SIMap."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .community import (
    LouvainConfig,
    MergeConfig,
    assign_instance_ids,
    louvain,
    merge_oversegmented,
)
from .instance_graph import InstanceGraph, RawEdgeAccumulator, accumulate_frame_edges, build_class_graph
from .projection import MapConfig, auto_map_config, project_frame
from .scene_io import ClassCatalog, Dataset
from .semantic_grid import SemanticAccumulator, SemanticGrid
from .simap import SIMap, assemble
from .synthworld import cc_baseline

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuildConfig:
    map: MapConfig = MapConfig()
    louvain: LouvainConfig = LouvainConfig()
    merge: MergeConfig = MergeConfig()
    auto_size: bool = True
    margin: float = 1.0
    keep_obs: bool = False
    threads: int = 1


@dataclass
class BuildResult:
    simap: SIMap
    grid: SemanticGrid
    graphs: dict = field(default_factory=dict)       # class_id -> InstanceGraph
    partitions: dict = field(default_factory=dict)   # class_id -> merged partition
    louvain_partitions: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)       # class_id -> modularity trace
    timings: dict = field(default_factory=dict)

    def instance_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c, _ in self.simap.instance_keys():
            out[c] = out.get(c, 0) + 1
        return out


def integrate_dataset(ds: Dataset, cfg: MapConfig, thing_ids, threads: int = 1):
    """Project every frame and fold it into the label and edge accumulators.

    Projection may run on a worker pool; integration always happens in frame
    order, so the result does not depend on ``threads``.
    """
    acc = SemanticAccumulator(cfg)
    edges = RawEdgeAccumulator(frozenset(thing_ids))

    def project(fr):
        return project_frame(fr, ds.intrinsics, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_hits = pool.map(project, ds.frames)
            for fr, hits in zip(ds.frames, all_hits):
                acc.integrate_frame(hits)
                accumulate_frame_edges(edges, hits, fr.pano, cfg)
    else:
        for fr in ds.frames:
            hits = project(fr)
            acc.integrate_frame(hits)
            accumulate_frame_edges(edges, hits, fr.pano, cfg)
    return acc, edges


def split_instances(grid: SemanticGrid, edges: RawEdgeAccumulator, catalog: ClassCatalog,
                    lcfg: LouvainConfig, mcfg: MergeConfig, result: BuildResult | None = None):
    """Run community detection and the merge step for every thing class on the grid."""
    per_class = []
    present = set(np.unique(grid.class_id).tolist())
    for c in catalog.thing_ids:
        if c not in present:
            continue
        g = build_class_graph(grid, edges, c, catalog)
        trace: list = []
        p0 = louvain(g, lcfg, trace)
        p = merge_oversegmented(p0, g, mcfg)
        per_class.append((g, p))
        if result is not None:
            result.graphs[c] = g
            result.louvain_partitions[c] = p0
            result.partitions[c] = p
            result.traces[c] = trace
    return assign_instance_ids(per_class, mcfg, grid.shape)


def build_map(ds: Dataset, cfg: BuildConfig = BuildConfig()) -> BuildResult:
    t0 = time.perf_counter()
    mcfg = cfg.map
    if cfg.auto_size:
        mcfg = auto_map_config(ds.frames, ds.intrinsics, mcfg, cfg.margin)
    t1 = time.perf_counter()
    acc, edges = integrate_dataset(ds, mcfg, ds.catalog.thing_ids, cfg.threads)
    grid = acc.finalize()
    t2 = time.perf_counter()
    result = BuildResult(simap=None, grid=grid)  # type: ignore[arg-type]
    inst = split_instances(grid, edges, ds.catalog, cfg.louvain, cfg.merge, result)
    t3 = time.perf_counter()
    result.simap = assemble(grid, inst, catalog=ds.catalog, keep_obs=cfg.keep_obs)
    result.timings = {"sizing": t1 - t0, "integration": t2 - t1, "instances": t3 - t2}
    log.info("built %dx%d map from %d frames in %.2fs", mcfg.height, mcfg.width, len(ds),
             time.perf_counter() - t0)
    return result


def baseline_map(grid: SemanticGrid, catalog: ClassCatalog, min_instance_cells: int = 3) -> SIMap:
    """Connected-components instance map over the same semantic grid."""
    inst = cc_baseline(grid, catalog.thing_ids, min_instance_cells)
    return assemble(grid, inst, catalog=catalog)
