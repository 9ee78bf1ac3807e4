"""Per-cell semantic labels via the max-height rule, plus per-cell observation counts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MixedFrameIds
from .projection import CellHit, FrameHits, MapConfig
from .scene_io import VOID

_NO_FRAME = np.iinfo(np.int64).min
_BIG = np.iinfo(np.int64).max


@dataclass(frozen=True)
class SemanticGrid:
    cfg: MapConfig
    class_id: np.ndarray   # (H, W) int64, VOID where nothing was accepted
    obs_count: np.ndarray  # (H, W) int64, frames with >= 1 accepted hit
    height: np.ndarray | None = None  # (H, W) best height, -inf where unobserved

    @property
    def shape(self):
        return self.class_id.shape


class SemanticAccumulator:
    """Running max-height label state over flat cell indices.

    A hit replaces the stored label when its height is strictly greater;
    equal heights fall back to the lower frame id, then the lower pixel index.
    That total order makes the result independent of integration order.
    """

    def __init__(self, cfg: MapConfig):
        n = cfg.n_cells
        self.cfg = cfg
        self.best_class = np.full(n, VOID, dtype=np.int64)
        self.best_height = np.full(n, -np.inf)
        self.best_frame = np.full(n, _BIG, dtype=np.int64)
        self.best_pixel = np.full(n, _BIG, dtype=np.int64)
        self.obs_count = np.zeros(n, dtype=np.int64)
        self.last_frame_seen = np.full(n, _NO_FRAME, dtype=np.int64)
        self.frames_processed = 0

    def integrate_frame(self, hits: FrameHits | Sequence[CellHit], image_width: int | None = None):
        if not isinstance(hits, FrameHits):
            if image_width is None:
                image_width = 1 + max((h.pixel[0] for h in hits), default=0)
            hits = FrameHits.from_hits(list(hits), image_width)
        self.frames_processed += 1
        if len(hits) == 0:
            return self
        fid = hits.frame_id
        cells = hits.flat_cells(self.cfg)

        # best hit per cell inside this frame: highest z, then lowest pixel index
        order = np.lexsort((hits.pixel, -hits.z, cells))
        cells_o = cells[order]
        first = np.ones(cells_o.size, dtype=bool)
        first[1:] = cells_o[1:] != cells_o[:-1]
        pick = order[first]
        c = cells[pick]
        z = hits.z[pick]
        pix = hits.pixel[pick]

        bh, bf, bp = self.best_height[c], self.best_frame[c], self.best_pixel[c]
        better = (z > bh) | ((z == bh) & ((fid < bf) | ((fid == bf) & (pix < bp))))
        cu = c[better]
        self.best_class[cu] = hits.class_id[pick][better]
        self.best_height[cu] = z[better]
        self.best_frame[cu] = fid
        self.best_pixel[cu] = pix[better]

        fresh = self.last_frame_seen[c] != fid
        self.obs_count[c[fresh]] += 1
        self.last_frame_seen[c] = fid
        return self

    def merge(self, other: "SemanticAccumulator") -> "SemanticAccumulator":
        """Fold in a partial accumulator built from a disjoint set of frames."""
        better = (other.best_height > self.best_height) | (
            (other.best_height == self.best_height) & (
                (other.best_frame < self.best_frame) |
                ((other.best_frame == self.best_frame) & (other.best_pixel < self.best_pixel))))
        for name in ("best_class", "best_height", "best_frame", "best_pixel"):
            getattr(self, name)[better] = getattr(other, name)[better]
        self.obs_count += other.obs_count
        self.last_frame_seen = np.maximum(self.last_frame_seen, other.last_frame_seen)
        self.frames_processed += other.frames_processed
        return self

    def finalize(self) -> SemanticGrid:
        shape = self.cfg.shape
        return SemanticGrid(
            cfg=self.cfg,
            class_id=self.best_class.reshape(shape).copy(),
            obs_count=self.obs_count.reshape(shape).copy(),
            height=self.best_height.reshape(shape).copy(),
        )


def integrate_frame(acc: SemanticAccumulator, hits) -> SemanticAccumulator:
    if not isinstance(hits, FrameHits):
        hits = list(hits)
        if len({h.frame_id for h in hits}) > 1:
            raise MixedFrameIds("integrate_frame requires hits from a single frame")
    return acc.integrate_frame(hits)


def finalize(acc: SemanticAccumulator) -> SemanticGrid:
    return acc.finalize()


def grid_from_labels(cfg: MapConfig, class_id, obs_count=None) -> SemanticGrid:
    """Wrap an existing class raster (e.g. a decoded map) as a SemanticGrid."""
    cls = np.asarray(class_id, dtype=np.int64).reshape(cfg.shape)
    obs = np.zeros(cfg.shape, dtype=np.int64) if obs_count is None else \
        np.asarray(obs_count, dtype=np.int64).reshape(cfg.shape)
    return SemanticGrid(cfg, cls, obs)
