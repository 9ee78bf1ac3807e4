from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simaps.errors import StuffClassRequested, UnknownClass
from simaps.instance_graph import (
    RawEdgeAccumulator,
    WeightedGraph,
    accumulate_frame_edges,
    build_class_graph,
)
from simaps.projection import FrameHits, MapConfig
from simaps.scene_io import VOID, ClassCatalog, PanopticFrame
from simaps.semantic_grid import SemanticGrid

CAT = ClassCatalog.from_tuples([(0, "floor", "stuff"), (1, "chair", "thing"), (2, "table", "thing")])
CFG = MapConfig(height=3, width=4)


def frame_hits(cells_rc, cls, ent, fid=0):
    """Hits for an image whose pixel (v, u) lands in cell cells_rc[v][u] (None = no hit)."""
    H, W = len(cells_rc), len(cells_rc[0])
    us, vs, rows, cols, cl, en = [], [], [], [], [], []
    for v in range(H):
        for u in range(W):
            if cells_rc[v][u] is None:
                continue
            r, c = cells_rc[v][u]
            us.append(u), vs.append(v), rows.append(r), cols.append(c)
            cl.append(cls[v][u]), en.append(ent[v][u])
    a = lambda x: np.array(x, dtype=np.int64)
    hits = FrameHits(fid, a(vs) * W + a(us), a(us), a(vs), a(rows), a(cols),
                     np.full(len(us), 0.5), a(cl), a(en))
    pano = PanopticFrame(np.array(cls, np.uint16), np.array(ent, np.uint16))
    return hits, pano


def counts_for(cells_rc, cls, ent, thing_ids=(1, 2)):
    acc = RawEdgeAccumulator(frozenset(thing_ids))
    hits, pano = frame_hits(cells_rc, cls, ent)
    accumulate_frame_edges(acc, hits, pano, CFG)
    return dict(acc.counts)


def test_adjacent_same_entity_adds_one():
    c = counts_for([[(0, 0), (0, 1)]], [[1, 1]], [[3, 3]])
    assert c == {(1, 0, 1): 1}


def test_different_entity_adds_nothing():
    assert counts_for([[(0, 0), (0, 1)]], [[1, 1]], [[3, 4]]) == {}


def test_same_cell_no_self_loop():
    assert counts_for([[(0, 0), (0, 0)]], [[1, 1]], [[3, 3]]) == {}


def test_stuff_pixels_ignored():
    assert counts_for([[(0, 0), (0, 1)]], [[0, 0]], [[0, 0]]) == {}


def test_vertical_adjacency_counts():
    c = counts_for([[(0, 0)], [(2, 3)]], [[2], [2]], [[0], [0]])
    assert c == {(2, 0, 11): 1}


def brute_force_counts(cells_rc, cls, ent, thing_ids):
    out = Counter()
    H, W = len(cells_rc), len(cells_rc[0])
    for v in range(H):
        for u in range(W):
            for dv, du in ((0, 1), (1, 0)):
                v2, u2 = v + dv, u + du
                if v2 >= H or u2 >= W:
                    continue
                a, b = cells_rc[v][u], cells_rc[v2][u2]
                if a is None or b is None or a == b:
                    continue
                if cls[v][u] != cls[v2][u2] or ent[v][u] != ent[v2][u2] or cls[v][u] not in thing_ids:
                    continue
                fa, fb = a[0] * CFG.width + a[1], b[0] * CFG.width + b[1]
                out[(cls[v][u], min(fa, fb), max(fa, fb))] += 1
    return dict(out)


@given(st.integers(0, 2**32 - 1))
def test_accumulation_matches_pixel_pair_oracle(seed):
    rng = np.random.default_rng(seed)
    H, W = 5, 6
    cells = [[None if rng.random() < 0.2 else (int(rng.integers(0, 3)), int(rng.integers(0, 4)))
              for _ in range(W)] for _ in range(H)]
    cls = rng.integers(0, 3, (H, W)).tolist()
    ent = rng.integers(0, 2, (H, W)).tolist()
    assert counts_for(cells, cls, ent) == brute_force_counts(cells, cls, ent, (1, 2))


def grid_of(labels, obs):
    return SemanticGrid(CFG, np.array(labels, np.int64), np.array(obs, np.int64))


def test_normalized_weight_uses_mean_obs():
    g = grid_of([[1, 1, VOID, VOID]] + [[VOID] * 4] * 2, [[2, 2, 0, 0]] + [[0] * 4] * 2)
    acc = RawEdgeAccumulator(frozenset({1}))
    acc.counts[(1, 0, 1)] = 4
    ig = build_class_graph(g, acc, 1, CAT)
    assert ig.n == 2 and list(ig.edges()) == [(0, 1, 2.0)]


def test_edges_to_relabeled_cells_dropped_and_isolated_nodes_kept():
    g = grid_of([[1, 2, 1, VOID]] + [[VOID] * 4] * 2, [[1, 1, 1, 0]] + [[0] * 4] * 2)
    acc = RawEdgeAccumulator(frozenset({1, 2}))
    acc.counts[(1, 0, 1)] = 3  # cell 1 ended up a table
    ig = build_class_graph(g, acc, 1, CAT)
    assert ig.n == 2 and ig.n_edges == 0
    assert [ig.rowcol(i) for i in range(ig.n)] == [(0, 0), (0, 2)]


def test_class_checks():
    g = grid_of([[VOID] * 4] * 3, [[0] * 4] * 3)
    acc = RawEdgeAccumulator()
    with pytest.raises(StuffClassRequested):
        build_class_graph(g, acc, 0, CAT)
    with pytest.raises(UnknownClass):
        build_class_graph(g, acc, 9, CAT)


def test_repeat_views_do_not_inflate_weights():
    # the same two-pixel entity seen in F frames: raw = F, mean obs = F, weight = 1
    for F in (1, 3, 10):
        acc = RawEdgeAccumulator(frozenset({1}))
        for f in range(F):
            hits, pano = frame_hits([[(0, 0), (0, 1)]], [[1, 1]], [[0, 0]], fid=f)
            accumulate_frame_edges(acc, hits, pano, CFG)
        g = grid_of([[1, 1, VOID, VOID]] + [[VOID] * 4] * 2, [[F, F, 0, 0]] + [[0] * 4] * 2)
        assert list(build_class_graph(g, acc, 1).edges()) == [(0, 1, 1.0)]


@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_raw_counts_are_frame_order_independent(seed, rnd):
    rng = np.random.default_rng(seed)
    frames = []
    for f in range(4):
        cells = [[(int(rng.integers(0, 3)), int(rng.integers(0, 4))) for _ in range(4)] for _ in range(3)]
        frames.append(frame_hits(cells, rng.integers(1, 3, (3, 4)).tolist(),
                                 rng.integers(0, 2, (3, 4)).tolist(), fid=f))

    def run(order):
        acc = RawEdgeAccumulator(frozenset({1, 2}))
        for hits, pano in order:
            accumulate_frame_edges(acc, hits, pano, CFG)
        return dict(acc.counts)

    shuffled = list(frames)
    rnd.shuffle(shuffled)
    assert run(frames) == run(shuffled)


def test_graph_symmetry_and_edge_list():
    g = WeightedGraph(3, [(0, 1, 1.5), (2, 1, 0.5)])
    g.check()
    assert g.degree(1) == 2.0 and g.total_weight == 2.0
    with pytest.raises(ValueError):
        g.add_edge(0, 2, 0.0)


def test_edge_list_export():
    g = grid_of([[1, 1, VOID, VOID]] + [[VOID] * 4] * 2, [[1, 1, 0, 0]] + [[0] * 4] * 2)
    acc = RawEdgeAccumulator(frozenset({1}))
    acc.counts[(1, 0, 1)] = 1
    assert build_class_graph(g, acc, 1).to_edge_list() == "0 0 0 1 1.0\n"


def test_pipeline_graphs_are_symmetric_and_positive(touching_run):
    for ig in touching_run.result.graphs.values():
        ig.check()
        assert all(w > 0 for _, _, w in ig.edges())
