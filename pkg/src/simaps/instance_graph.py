"""Per-class weighted cell graphs built from intra-frame entity adjacency.

Whenever two 4-adjacent pixels of a frame carry the same (class, entity) label
and land in different grid cells, the edge between those cells gains one unit.
Raw counts are normalized by the mean observation count of the two endpoints,
so areas the camera revisits often do not get inflated weights.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import StuffClassRequested, UnknownClass
from .projection import FrameHits, MapConfig
from .scene_io import ClassCatalog, PanopticFrame
from .semantic_grid import SemanticGrid


class WeightedGraph:
    """Undirected weighted graph on nodes ``0..n-1`` with optional self-loops.

    ``adj[i][j]`` holds the weight of edge (i, j) for i != j and is kept
    symmetric; self-loop weights live in ``self_loops``.
    """

    def __init__(self, n: int, edges: Iterable[tuple[int, int, float]] = (), self_loops=None):
        self.n = n
        self.adj: list[dict[int, float]] = [dict() for _ in range(n)]
        self.self_loops = [0.0] * n if self_loops is None else [float(w) for w in self_loops]
        for a, b, w in edges:
            self.add_edge(a, b, w)

    def add_edge(self, a: int, b: int, w: float):
        if w <= 0:
            raise ValueError(f"edge weights must be positive, got {w}")
        if a == b:
            self.self_loops[a] += w
            return
        self.adj[a][b] = self.adj[a].get(b, 0.0) + w
        self.adj[b][a] = self.adj[b].get(a, 0.0) + w

    def __len__(self):
        return self.n

    def edges(self):
        """Each undirected non-loop edge once, as (a, b, w) with a < b, sorted."""
        for a in range(self.n):
            for b in sorted(self.adj[a]):
                if a < b:
                    yield a, b, self.adj[a][b]

    @property
    def n_edges(self) -> int:
        return sum(len(d) for d in self.adj) // 2

    def degree(self, i: int) -> float:
        """Weighted degree; a self-loop contributes twice its weight."""
        return sum(self.adj[i].values()) + 2.0 * self.self_loops[i]

    def degrees(self) -> list[float]:
        return [self.degree(i) for i in range(self.n)]

    @property
    def total_weight(self) -> float:
        """m: every edge counted once, self-loops included."""
        return sum(w for _, _, w in self.edges()) + sum(self.self_loops)

    def check(self):
        for a in range(self.n):
            for b, w in self.adj[a].items():
                assert a != b, "self-loop stored in adjacency"
                assert w > 0, "non-positive weight"
                assert self.adj[b].get(a) == w, "asymmetric adjacency"


@dataclass
class RawEdgeAccumulator:
    """Integer co-observation counts keyed by (class_id, cell_a, cell_b), cell_a < cell_b
    as flat row-major indices."""

    thing_ids: frozenset | None = None
    counts: dict = field(default_factory=lambda: defaultdict(int))

    def merge(self, other: "RawEdgeAccumulator") -> "RawEdgeAccumulator":
        for k, c in other.counts.items():
            self.counts[k] += c
        return self

    def for_class(self, class_id: int) -> dict[tuple[int, int], int]:
        return {(a, b): c for (o, a, b), c in self.counts.items() if o == class_id}


def frame_edge_counts(hits: FrameHits, pano: PanopticFrame, cfg: MapConfig,
                      thing_ids=None) -> tuple[np.ndarray, np.ndarray]:
    """Unique (class, a, b) keys and their counts for one frame."""
    H, W = pano.shape
    cell = np.full((H, W), -1, dtype=np.int64)
    cls = np.full((H, W), -1, dtype=np.int64)
    ent = np.full((H, W), -1, dtype=np.int64)
    cell[hits.v, hits.u] = hits.flat_cells(cfg)
    cls[hits.v, hits.u] = hits.class_id
    ent[hits.v, hits.u] = hits.entity_id
    if thing_ids is not None:
        # stuff pixels never contribute edges
        stuff = ~np.isin(cls, np.fromiter(thing_ids, dtype=np.int64))
        cell[stuff] = -1

    keys = []
    for sl1, sl2 in (((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
                     ((slice(None, -1), slice(None)), (slice(1, None), slice(None)))):
        c1, c2 = cell[sl1], cell[sl2]
        ok = (c1 >= 0) & (c2 >= 0) & (c1 != c2) & (cls[sl1] == cls[sl2]) & (ent[sl1] == ent[sl2])
        a, b = c1[ok], c2[ok]
        keys.append(np.stack([cls[sl1][ok], np.minimum(a, b), np.maximum(a, b)], axis=1))
    keys = np.concatenate(keys, axis=0)
    if keys.size == 0:
        return keys.reshape(0, 3), np.zeros(0, dtype=np.int64)
    return np.unique(keys, axis=0, return_counts=True)


def accumulate_frame_edges(acc: RawEdgeAccumulator, hits: FrameHits, pano: PanopticFrame,
                           cfg: MapConfig) -> RawEdgeAccumulator:
    keys, counts = frame_edge_counts(hits, pano, cfg, acc.thing_ids)
    c = acc.counts
    for (o, a, b), n in zip(keys.tolist(), counts.tolist()):
        c[(o, a, b)] += n
    return acc


class InstanceGraph(WeightedGraph):
    """Cell graph of one thing class; node i is flat cell ``cells[i]``."""

    def __init__(self, class_id: int, cfg: MapConfig, cells: np.ndarray, obs: np.ndarray,
                 edges=()):
        super().__init__(len(cells), edges)
        self.class_id = class_id
        self.cfg = cfg
        self.cells = np.asarray(cells, dtype=np.int64)
        self.obs = np.asarray(obs, dtype=np.int64)

    def rowcol(self, i: int) -> tuple[int, int]:
        return divmod(int(self.cells[i]), self.cfg.width)

    def to_edge_list(self) -> str:
        """Debug export: one ``a_row a_col b_row b_col weight`` line per edge."""
        lines = []
        for a, b, w in self.edges():
            ar, ac = self.rowcol(a)
            br, bc = self.rowcol(b)
            lines.append(f"{ar} {ac} {br} {bc} {w!r}")
        return "\n".join(lines) + ("\n" if lines else "")


def build_class_graph(grid: SemanticGrid, acc: RawEdgeAccumulator, class_id: int,
                      catalog: ClassCatalog | None = None) -> InstanceGraph:
    if catalog is not None:
        if class_id not in catalog:
            raise UnknownClass(class_id)
        if not catalog.is_thing(class_id):
            raise StuffClassRequested(f"class {class_id} is a stuff class")
    labels = grid.class_id.ravel()
    obs = grid.obs_count.ravel()
    cells = np.flatnonzero(labels == class_id)
    index = {int(c): i for i, c in enumerate(cells)}
    edges = []
    for (a, b), raw in sorted(acc.for_class(class_id).items()):
        ia, ib = index.get(a), index.get(b)
        if ia is None or ib is None:
            continue
        edges.append((ia, ib, float(raw / ((obs[a] + obs[b]) / 2.0))))
    return InstanceGraph(class_id, grid.cfg, cells, obs[cells], edges)
