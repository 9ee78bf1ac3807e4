"""Splitting a class graph into object instances.

Louvain modularity optimization (local moves to a fixpoint, then community
aggregation, repeated until the modularity gain stalls), followed by a merge of
over-segmented communities and a deterministic instance numbering.

A partition is a plain list mapping node index -> community id. Every scan
order and tie-break is fixed, so identical graphs always give identical
partitions.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptyGraph, ModularityDecreased
from .instance_graph import InstanceGraph, WeightedGraph

# Moves need a gain above float noise; anything smaller is treated as zero.
_MIN_MOVE_GAIN = 1e-12
_MONOTONE_TOL = 1e-12
_MAX_PASSES = 10_000


@dataclass(frozen=True)
class LouvainConfig:
    min_modularity_gain: float = 1e-9
    max_outer_iterations: int = 64
    check_monotonic: bool = True

    def __post_init__(self):
        if not self.min_modularity_gain > 0:
            raise ConfigError("min_modularity_gain must be positive")
        if self.max_outer_iterations < 1:
            raise ConfigError("max_outer_iterations must be >= 1")


@dataclass(frozen=True)
class MergeConfig:
    k_percent: float = 5.0
    min_instance_cells: int = 3

    def __post_init__(self):
        if not 0 <= self.k_percent <= 100:
            raise ConfigError(f"K must lie in [0, 100], got {self.k_percent}")
        if self.min_instance_cells < 1:
            raise ConfigError("min_instance_cells must be >= 1")


def compact(p: Sequence[int]) -> list[int]:
    """Renumber community ids densely in order of first appearance."""
    remap: dict[int, int] = {}
    return [remap.setdefault(c, len(remap)) for c in p]


def singletons(n: int) -> list[int]:
    return list(range(n))


def modularity(g: WeightedGraph, p: Sequence[int]) -> float:
    """Weighted Newman-Girvan modularity at resolution 1.

    ``Q = sum_c e_c / m - (d_c / 2m)^2`` where ``e_c`` is the weight inside
    community c (self-loops once), ``d_c`` its summed weighted degree and ``m``
    the total edge weight.
    """
    m = g.total_weight
    if m <= 0:
        raise EmptyGraph("modularity is undefined for a graph without edge weight")
    inner = defaultdict(float)
    deg = defaultdict(float)
    for a, b, w in g.edges():
        if p[a] == p[b]:
            inner[p[a]] += w
    for i in range(g.n):
        inner[p[i]] += g.self_loops[i]
        deg[p[i]] += g.degree(i)
    return sum(inner[c] / m - (deg[c] / (2.0 * m)) ** 2 for c in deg)


def local_move_pass(g: WeightedGraph, p: Sequence[int], _degrees=None) -> tuple[list[int], int]:
    """One scan over nodes in ascending order.

    Each node joins the neighbouring community with the largest strictly
    positive modularity gain; equal gains go to the lowest community id.
    """
    m = g.total_weight
    if m <= 0:
        raise EmptyGraph("local moves need a graph with positive total weight")
    p = list(p)
    k = g.degrees() if _degrees is None else _degrees
    tot: dict[int, float] = defaultdict(float)
    for i, c in enumerate(p):
        tot[c] += k[i]
    two_m = 2.0 * m
    moves = 0
    for i in range(g.n):
        ci, ki = p[i], k[i]
        links: dict[int, float] = {}
        for j, w in g.adj[i].items():
            cj = p[j]
            links[cj] = links.get(cj, 0.0) + w
        tot[ci] -= ki
        stay = links.get(ci, 0.0) - tot[ci] * ki / two_m
        best_c, best = ci, _MIN_MOVE_GAIN
        for c in sorted(links):
            if c == ci:
                continue
            gain = (links[c] - tot[c] * ki / two_m - stay) / m
            if gain > best:
                best_c, best = c, gain
        tot[best_c] += ki
        if best_c != ci:
            p[i] = best_c
            moves += 1
    return p, moves


def aggregate(g: WeightedGraph, p: Sequence[int]) -> WeightedGraph:
    """Collapse each community into one node; intra weights become self-loops."""
    nc = max(p) + 1 if len(p) else 0
    loops = [0.0] * nc
    for i in range(g.n):
        loops[p[i]] += g.self_loops[i]
    cross: dict[tuple[int, int], float] = defaultdict(float)
    for a, b, w in g.edges():
        ca, cb = p[a], p[b]
        if ca == cb:
            loops[ca] += w
        else:
            cross[(min(ca, cb), max(ca, cb))] += w
    out = WeightedGraph(nc, self_loops=loops)
    for (a, b), w in sorted(cross.items()):
        out.add_edge(a, b, w)
    return out


def louvain(g: WeightedGraph, cfg: LouvainConfig = LouvainConfig(),
            trace: list | None = None) -> list[int]:
    """Partition the nodes of ``g``; edgeless graphs come back as singletons.

    If ``trace`` is a list, the modularity after every local-move pass and
    every outer iteration is appended to it as ``(kind, level, Q)``.
    """
    n = g.n
    if n == 0:
        return []
    if g.total_weight <= 0:
        return singletons(n)

    membership = singletons(n)
    level = g
    q_prev = modularity(g, membership)
    if trace is not None:
        trace.append(("start", 0, q_prev))

    for outer in range(cfg.max_outer_iterations):
        p = singletons(level.n)
        k = level.degrees()
        q_last = q_prev
        total_moves = 0
        for _ in range(_MAX_PASSES):
            p, moves = local_move_pass(level, p, k)
            if cfg.check_monotonic or trace is not None:
                q = modularity(level, p)
                if cfg.check_monotonic and q < q_last - _MONOTONE_TOL:
                    raise ModularityDecreased(
                        f"local move pass lowered modularity {q_last!r} -> {q!r}")
                if trace is not None:
                    trace.append(("pass", outer, q))
                q_last = q
            if moves == 0:
                break
            total_moves += moves
        if total_moves == 0:
            break
        p = compact(p)
        membership = [p[c] for c in membership]
        q_new = modularity(level, p)
        if cfg.check_monotonic and q_new < q_prev - _MONOTONE_TOL:
            raise ModularityDecreased(f"outer iteration lowered modularity {q_prev!r} -> {q_new!r}")
        if trace is not None:
            trace.append(("level", outer, q_new))
        level = aggregate(level, p)
        if q_new - q_prev < cfg.min_modularity_gain:
            break
        q_prev = q_new
    return compact(membership)


def merge_oversegmented(p: Sequence[int], g: WeightedGraph, cfg: MergeConfig) -> list[int]:
    """Merge C1 into C2 when more than K% of C1's members have a graph edge into C2
    (checked in both directions).

    Candidate pairs are visited by ascending size of the smaller community,
    then by community ids; after each merge the scan restarts, until a full
    scan merges nothing.
    """
    comm = compact(p)
    k = cfg.k_percent
    while True:
        size: dict[int, int] = defaultdict(int)
        for c in comm:
            size[c] += 1
        touching: dict[tuple[int, int], set] = defaultdict(set)
        for v in range(g.n):
            cv = comm[v]
            for w in g.adj[v]:
                cw = comm[w]
                if cw != cv:
                    touching[(cv, cw)].add(v)
        pairs = sorted({(min(a, b), max(a, b)) for a, b in touching},
                       key=lambda ab: (min(size[ab[0]], size[ab[1]]), ab))
        merged = False
        for a, b in pairs:
            # integer form of |touching| / |C| > K / 100
            if (len(touching[(a, b)]) * 100 > k * size[a]
                    or len(touching[(b, a)]) * 100 > k * size[b]):
                comm = [a if c == b else c for c in comm]
                merged = True
                break
        if not merged:
            return compact(comm)


def community_sizes(p: Sequence[int]) -> dict[int, int]:
    sizes: dict[int, int] = defaultdict(int)
    for c in p:
        sizes[c] += 1
    return dict(sizes)


def number_communities(cells: np.ndarray, p: Sequence[int], min_cells: int) -> list[int]:
    """Instance index per node: communities of at least ``min_cells`` nodes get
    1..n by size (descending), ties by smallest flat cell index; the rest get 0."""
    first: dict[int, int] = {}
    size: dict[int, int] = defaultdict(int)
    for i, c in enumerate(p):
        size[c] += 1
        cell = int(cells[i])
        if c not in first or cell < first[c]:
            first[c] = cell
    ranked = sorted((c for c in size if size[c] >= min_cells), key=lambda c: (-size[c], first[c]))
    t_of = {c: t for t, c in enumerate(ranked, 1)}
    return [t_of.get(c, 0) for c in p]


def assign_instance_ids(results: Sequence[tuple[InstanceGraph, Sequence[int]]],
                        cfg: MergeConfig, shape: tuple[int, int]) -> np.ndarray:
    """Raster of instance indices ``t`` (0 outside any numbered community)."""
    t = np.zeros(shape[0] * shape[1], dtype=np.int64)
    for graph, p in results:
        if graph.n:
            t[graph.cells] = number_communities(graph.cells, p, cfg.min_instance_cells)
    return t.reshape(shape)


def dump_partition(graph: InstanceGraph, p: Sequence[int]) -> str:
    """Debug dump: one ``row col community_id`` line per node."""
    lines = [f"{r} {c} {p[i]}" for i, (r, c) in
             ((i, graph.rowcol(i)) for i in range(graph.n))]
    return "\n".join(lines) + ("\n" if lines else "")
