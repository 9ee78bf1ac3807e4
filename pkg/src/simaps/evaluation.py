"""Success rate, instance matching and panoptic quality."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigMismatch, EmptyEpisodeSet, UndefinedPQ
from .simap import SIMap
from .synthworld import SceneTruth

DEFAULT_TAU = 1.0


@dataclass
class EpisodeResult:
    command: str
    final_xy: tuple[float, float]
    target_class: int
    target_uid: int | None = None
    success: bool = False
    error: str | None = None


@dataclass
class MatchResult:
    tp: list = field(default_factory=list)  # (pred t, truth uid, IoU)
    fp: list = field(default_factory=list)  # pred t
    fn: list = field(default_factory=list)  # truth uid


@dataclass
class MetricsReport:
    success_rate: dict = field(default_factory=dict)   # method -> rate
    pq: dict = field(default_factory=dict)             # method -> {class: PQ, "mean": PQ}
    counts: dict = field(default_factory=dict)         # method -> {class: (n_pred, n_truth, extra, missed)}
    deltas: dict = field(default_factory=dict)         # baseline -> {metric: reference minus baseline}

    def add_baseline_deltas(self, reference: str, baseline: str) -> dict:
        """Record how far ``reference`` is ahead of ``baseline`` on every shared metric."""
        d = {}
        if reference in self.success_rate and baseline in self.success_rate:
            d["success_rate"] = self.success_rate[reference] - self.success_rate[baseline]
        ref_pq, base_pq = self.pq.get(reference, {}), self.pq.get(baseline, {})
        if "mean" in ref_pq and "mean" in base_pq:
            d["pq"] = ref_pq["mean"] - base_pq["mean"]
        self.deltas[baseline] = d
        return d

    def to_json(self) -> str:
        def keys_to_str(o):
            if isinstance(o, dict):
                return {str(k): keys_to_str(v) for k, v in o.items()}
            if isinstance(o, (list, tuple)):
                return [keys_to_str(v) for v in o]
            return o
        return json.dumps(keys_to_str(asdict(self)), indent=2, sort_keys=True)

    def table(self) -> str:
        """Rows are methods, columns are evaluations."""
        methods = sorted(set(self.success_rate) | set(self.pq) | set(self.counts))
        head = ["Method", "Success Rate", "PQ", "Instances (pred/truth)"]
        rows = []
        for m in methods:
            sr = self.success_rate.get(m)
            pq = self.pq.get(m, {}).get("mean")
            cnt = self.counts.get(m, {})
            npred = sum(v[0] for v in cnt.values())
            ntruth = sum(v[1] for v in cnt.values())
            rows.append([m, "-" if sr is None else f"{sr:.2f}",
                         "-" if pq is None else f"{pq:.3f}",
                         f"{npred}/{ntruth}" if cnt else "-"])
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        lines = [rule, fmt.format(*head), rule] + [fmt.format(*r) for r in rows] + [rule]
        return "\n".join(lines)


def auto_success(final_xy, target_xy, tau: float = DEFAULT_TAU) -> bool:
    """True when the final position is within ``tau`` meters (inclusive) of any target point."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    pts = np.asarray(target_xy, dtype=np.float64).reshape(-1, 2)
    if pts.size == 0:
        return False
    d = np.hypot(pts[:, 0] - final_xy[0], pts[:, 1] - final_xy[1])
    return bool(d.min() <= tau)


def success_rate(outcomes: Iterable) -> float:
    """Fraction of successful episodes; items are bools, EpisodeResults or (episode, bool)."""
    flags = []
    for o in outcomes:
        if isinstance(o, tuple):
            o = o[1]
        elif isinstance(o, EpisodeResult):
            o = o.success
        flags.append(bool(o))
    if not flags:
        raise EmptyEpisodeSet("success rate needs at least one episode")
    return sum(flags) / len(flags)


def _truth_parts(truth):
    if isinstance(truth, SceneTruth):
        return truth.map, truth.uid_of
    return truth, None


def match_instances(pred: SIMap, truth, class_id: int, iou_threshold: float = 0.5) -> MatchResult:
    """Match predicted and true instances of one class by IoU > threshold.

    With a threshold of at least 0.5 every match is unique.
    """
    tmap, uid_of = _truth_parts(truth)
    if not pred.cfg.same_grid(tmap.cfg):
        raise ConfigMismatch("prediction and truth use different map geometry")
    p = np.where((pred.class_id == class_id) & (pred.instance > 0), pred.instance, 0).ravel()
    g = np.where((tmap.class_id == class_id) & (tmap.instance > 0), tmap.instance, 0).ravel()
    p_ids, p_sizes = np.unique(p[p > 0], return_counts=True)
    g_ids, g_sizes = np.unique(g[g > 0], return_counts=True)
    psize = dict(zip(p_ids.tolist(), p_sizes.tolist()))
    gsize = dict(zip(g_ids.tolist(), g_sizes.tolist()))
    both = (p > 0) & (g > 0)
    inter = {}
    if both.any():
        pairs, counts = np.unique(np.stack([p[both], g[both]], axis=1), axis=0, return_counts=True)
        inter = {(int(a), int(b)): int(c) for (a, b), c in zip(pairs, counts)}

    def uid(t):
        return uid_of.get((class_id, t), t) if uid_of is not None else t

    mr = MatchResult()
    used_p, used_g = set(), set()
    for (a, b), n in sorted(inter.items()):
        iou = n / (psize[a] + gsize[b] - n)
        if iou > iou_threshold and a not in used_p and b not in used_g:
            mr.tp.append((a, uid(b), iou))
            used_p.add(a)
            used_g.add(b)
    mr.fp = [a for a in sorted(psize) if a not in used_p]
    mr.fn = [uid(b) for b in sorted(gsize) if b not in used_g]
    return mr


def panoptic_quality(mr: MatchResult) -> float:
    denom = len(mr.tp) + 0.5 * len(mr.fp) + 0.5 * len(mr.fn)
    if denom == 0:
        raise UndefinedPQ("no predicted and no true instances")
    return sum(iou for _, _, iou in mr.tp) / denom


def pq_by_class(pred: SIMap, truth, class_ids: Sequence[int] | None = None,
                iou_threshold: float = 0.5) -> dict:
    """Per-class PQ plus their macro average over classes present in the truth."""
    tmap, _ = _truth_parts(truth)
    if class_ids is None:
        class_ids = sorted({c for c, _ in tmap.instance_keys()})
    out = {}
    for c in class_ids:
        out[c] = panoptic_quality(match_instances(pred, truth, c, iou_threshold))
    truth_classes = {c for c, _ in tmap.instance_keys()}
    vals = [v for c, v in out.items() if c in truth_classes]
    out["mean"] = float(np.mean(vals)) if vals else math.nan
    return out


def instance_count_report(pred: SIMap, truth, class_ids: Sequence[int] | None = None,
                          iou_threshold: float = 0.5) -> dict:
    """Per class: (n_pred, n_truth, extra, missed) where extra/missed are unmatched instances."""
    tmap, _ = _truth_parts(truth)
    if not pred.cfg.same_grid(tmap.cfg):
        raise ConfigMismatch("prediction and truth use different map geometry")
    if class_ids is None:
        class_ids = sorted({c for c, _ in tmap.instance_keys()} | {c for c, _ in pred.instance_keys()})
    out = {}
    for c in class_ids:
        mr = match_instances(pred, truth, c, iou_threshold)
        n_pred = len(mr.tp) + len(mr.fp)
        n_truth = len(mr.tp) + len(mr.fn)
        out[c] = (n_pred, n_truth, len(mr.fp), len(mr.fn))
    return out
