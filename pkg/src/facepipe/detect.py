"""Detector-side box geometry: anchor grids, IoU, NMS, label assignment.

Boxes are (x_min, y_min, x_max, y_max) arrays in pixel coordinates. Anchor
generation covers every stride cell with centered squares; training-time
assignment matches anchors to ground truth by IoU with a guarantee that no
ground truth box goes unmatched, and hard-negative selection keeps the
positive/negative balance fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ParseError

log = logging.getLogger(__name__)

NEGATIVE = -1
IGNORE = -2

DEFAULT_SCALES_PER_STRIDE = (1.0, 2.0)
FASTER_STRIDES = (4, 8)
BASELINE_STRIDES = (8, 16, 32)


@dataclass(frozen=True)
class AnchorConfig:
    """Anchor grid layout for one input resolution.

    Per stride: square anchors of side ``base_size * scale`` at each cell
    center. ``base_sizes`` defaults to 4x the stride. ``emit_landmarks``
    flags which strides carry a landmark head; it does not change the
    geometry here.
    """

    input_width: int
    input_height: int
    strides: tuple[int, ...] = FASTER_STRIDES
    scales_per_stride: Mapping[int, tuple[float, ...]] = None
    base_sizes: Mapping[int, float] = None
    emit_landmarks: Mapping[int, bool] = None

    def __post_init__(self):
        if self.input_width < 1 or self.input_height < 1:
            raise ValueError("input dimensions must be positive")
        strides = tuple(int(s) for s in self.strides)
        if not strides or any(s < 1 for s in strides):
            raise ValueError("strides must be positive integers")
        if len(set(strides)) != len(strides):
            raise ValueError("strides must be distinct")
        for s in strides:
            if s > self.input_width and s > self.input_height:
                raise ValueError(
                    f"stride {s} exceeds both input extents "
                    f"{self.input_width}x{self.input_height}"
                )
        object.__setattr__(self, "strides", strides)
        scales = dict(self.scales_per_stride or {})
        for s in strides:
            scales.setdefault(s, DEFAULT_SCALES_PER_STRIDE)
        scales = {s: tuple(float(v) for v in scales[s]) for s in strides}
        for s, vals in scales.items():
            if not vals or any(v <= 0 for v in vals):
                raise ValueError(f"scales for stride {s} must be positive")
        object.__setattr__(self, "scales_per_stride", scales)
        bases = dict(self.base_sizes or {})
        for s in strides:
            bases.setdefault(s, 4.0 * s)
        bases = {s: float(bases[s]) for s in strides}
        if any(b <= 0 for b in bases.values()):
            raise ValueError("base sizes must be positive")
        object.__setattr__(self, "base_sizes", bases)
        marks = dict(self.emit_landmarks or {})
        for s in strides:
            marks.setdefault(s, False)
        object.__setattr__(self, "emit_landmarks", {s: bool(marks[s]) for s in strides})

    @classmethod
    def faster(cls, input_width: int, input_height: int, **kw) -> "AnchorConfig":
        """Two-stride profile for latency-sensitive use."""
        return cls(input_width, input_height, strides=FASTER_STRIDES, **kw)

    @classmethod
    def baseline(cls, input_width: int, input_height: int, **kw) -> "AnchorConfig":
        """Three-stride profile covering a wider size range."""
        return cls(input_width, input_height, strides=BASELINE_STRIDES, **kw)

    def anchor_count(self) -> int:
        total = 0
        for s in self.strides:
            cells = (self.input_width // s) * (self.input_height // s)
            total += cells * len(self.scales_per_stride[s])
        return total


def generate_anchors(config: AnchorConfig) -> np.ndarray:
    """All anchors for the configured grid as an (N, 4) float array.

    Order is stride-major in configured order, then row-major over cells,
    then scale order within a cell. Cell (row, col) at stride s centers
    its anchors at ((col + 0.5) * s, (row + 0.5) * s); anchors near the
    border may extend past the image.
    """
    blocks = []
    for s in config.strides:
        cols = config.input_width // s
        rows = config.input_height // s
        if cols == 0 or rows == 0:
            continue
        scales = np.asarray(config.scales_per_stride[s], dtype=np.float64)
        sides = config.base_sizes[s] * scales
        cx = (np.arange(cols, dtype=np.float64) + 0.5) * s
        cy = (np.arange(rows, dtype=np.float64) + 0.5) * s
        # (rows, cols, scales) grids flattened row-major keep the order.
        cxg = np.broadcast_to(cx[np.newaxis, :, np.newaxis], (rows, cols, len(sides)))
        cyg = np.broadcast_to(cy[:, np.newaxis, np.newaxis], (rows, cols, len(sides)))
        half = np.broadcast_to(sides / 2.0, (rows, cols, len(sides)))
        block = np.stack(
            [cxg - half, cyg - half, cxg + half, cyg + half], axis=-1
        ).reshape(-1, 4)
        blocks.append(block)
    if not blocks:
        return np.empty((0, 4), dtype=np.float64)
    return np.concatenate(blocks, axis=0)


def iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """Intersection over union of two boxes; degenerate boxes give 0."""
    ax0, ay0, ax1, ay1 = (float(v) for v in box_a)
    bx0, by0, bx1, by1 = (float(v) for v in box_b)
    area_a = max(ax1 - ax0, 0.0) * max(ay1 - ay0, 0.0)
    area_b = max(bx1 - bx0, 0.0) * max(by1 - by0, 0.0)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b)). Degenerate rows give 0."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    area_a = np.maximum(a[:, 2] - a[:, 0], 0.0) * np.maximum(a[:, 3] - a[:, 1], 0.0)
    area_b = np.maximum(b[:, 2] - b[:, 0], 0.0) * np.maximum(b[:, 3] - b[:, 1], 0.0)
    iw = np.minimum(a[:, np.newaxis, 2], b[np.newaxis, :, 2]) - np.maximum(
        a[:, np.newaxis, 0], b[np.newaxis, :, 0]
    )
    ih = np.minimum(a[:, np.newaxis, 3], b[np.newaxis, :, 3]) - np.maximum(
        a[:, np.newaxis, 1], b[np.newaxis, :, 1]
    )
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    union = area_a[:, np.newaxis] + area_b[np.newaxis, :] - inter
    out = np.zeros((len(a), len(b)), dtype=np.float64)
    ok = (area_a[:, np.newaxis] > 0) & (area_b[np.newaxis, :] > 0) & (inter > 0)
    np.divide(inter, union, out=out, where=ok)
    return out


def nms(
    boxes: np.ndarray,
    scores: np.ndarray,
    iou_threshold: float = 0.4,
    score_threshold: Optional[float] = None,
) -> np.ndarray:
    """Greedy non-maximum suppression.

    Returns indices into the input arrays of the kept boxes, ordered by
    descending score with ties broken toward the lower original index.
    Boxes scoring below ``score_threshold`` are dropped up front; a kept
    box suppresses others whose IoU with it strictly exceeds
    ``iou_threshold``.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(boxes) != len(scores):
        raise ValueError(f"{len(boxes)} boxes vs {len(scores)} scores")
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    idx = np.arange(len(boxes))
    if score_threshold is not None:
        keep_mask = scores >= score_threshold
        idx = idx[keep_mask]
    if len(idx) == 0:
        return np.empty(0, dtype=np.int64)
    order = idx[np.lexsort((idx, -scores[idx]))]
    kept: list[int] = []
    alive = np.ones(len(order), dtype=bool)
    for i in range(len(order)):
        if not alive[i]:
            continue
        this = order[i]
        kept.append(int(this))
        rest = order[i + 1 :][alive[i + 1 :]]
        if len(rest) == 0:
            continue
        overlaps = iou_matrix(boxes[this][np.newaxis], boxes[rest])[0]
        dead = rest[overlaps > iou_threshold]
        if len(dead):
            alive[np.isin(order, dead)] = False
    return np.asarray(kept, dtype=np.int64)


def assign_labels(
    anchors: np.ndarray,
    gt_boxes: np.ndarray,
    pos_threshold: float = 0.5,
    neg_threshold: float = 0.3,
) -> np.ndarray:
    """Match anchors to ground truth boxes for training.

    Returns one int per anchor: the matched ground truth index, NEGATIVE,
    or IGNORE. An anchor is positive to its highest-IoU ground truth when
    that IoU strictly exceeds ``pos_threshold``, negative when its best
    IoU is strictly below ``neg_threshold``, and ignored in between.

    Afterwards every ground truth still without a positive claims its
    highest-IoU anchor (ties toward the lower anchor index), overriding
    that anchor's label. Claims never reuse an anchor already claimed this
    way, and the pass repeats until every ground truth is matched or no
    unclaimed anchors remain, so a claim that empties another ground
    truth's match gets repaired on the next pass.
    """
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if not 0.0 <= neg_threshold <= pos_threshold <= 1.0:
        raise ValueError(
            f"need 0 <= neg_threshold <= pos_threshold <= 1, got "
            f"{neg_threshold}, {pos_threshold}"
        )
    n_anchor, n_gt = len(anchors), len(gt_boxes)
    labels = np.full(n_anchor, NEGATIVE, dtype=np.int64)
    if n_anchor == 0 or n_gt == 0:
        return labels
    m = iou_matrix(anchors, gt_boxes)
    best_gt = np.argmax(m, axis=1)  # lowest index on ties
    best_iou = m[np.arange(n_anchor), best_gt]
    labels[:] = IGNORE
    labels[best_iou < neg_threshold] = NEGATIVE
    pos = best_iou > pos_threshold
    labels[pos] = best_gt[pos]

    claimed = np.zeros(n_anchor, dtype=bool)
    while True:
        matched = np.zeros(n_gt, dtype=bool)
        matched[labels[labels >= 0]] = True
        if matched.all() or claimed.all():
            break
        progressed = False
        for g in np.flatnonzero(~matched):
            free = np.flatnonzero(~claimed)
            if len(free) == 0:
                break
            col = m[free, g]
            best = free[np.argmax(col)]
            labels[best] = g
            claimed[best] = True
            progressed = True
        if not progressed:
            break
    return labels


def ohem_select(
    labels: np.ndarray,
    difficulty: np.ndarray,
    neg_pos_ratio: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Pick training samples: all positives plus the hardest negatives.

    ``difficulty`` scores every anchor; higher means harder. Negatives are
    taken in descending difficulty (ties toward the lower index) up to
    ``neg_pos_ratio`` times the positive count. With no positives at all,
    ``neg_pos_ratio`` negatives are still selected so the step yields
    gradient, and a warning is logged.
    """
    labels = np.asarray(labels).reshape(-1)
    difficulty = np.asarray(difficulty, dtype=np.float64).reshape(-1)
    if len(labels) != len(difficulty):
        raise ValueError(f"{len(labels)} labels vs {len(difficulty)} scores")
    if neg_pos_ratio < 1:
        raise ValueError(f"neg_pos_ratio must be at least 1, got {neg_pos_ratio}")
    pos_idx = np.flatnonzero(labels >= 0)
    neg_pool = np.flatnonzero(labels == NEGATIVE)
    if len(pos_idx) == 0:
        budget = min(int(neg_pos_ratio), len(neg_pool))
        log.warning(
            "no positive anchors in batch; keeping %d hardest negatives", budget
        )
    else:
        budget = min(int(neg_pos_ratio) * len(pos_idx), len(neg_pool))
    order = neg_pool[np.lexsort((neg_pool, -difficulty[neg_pool]))]
    return pos_idx.astype(np.int64), order[:budget].astype(np.int64)


# ----------------------------------------------------------------------
# scored-box text files (one "x_min y_min x_max y_max score" per line)

def read_scored_boxes(path) -> tuple[np.ndarray, np.ndarray]:
    boxes, scores = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ParseError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field") from None
        boxes.append(vals[:4])
        scores.append(vals[4])
    return (
        np.asarray(boxes, dtype=np.float64).reshape(-1, 4),
        np.asarray(scores, dtype=np.float64),
    )


def write_scored_boxes(path, boxes: np.ndarray, scores: np.ndarray) -> None:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    lines = [
        " ".join(repr(float(v)) for v in (b[0], b[1], b[2], b[3], s))
        for b, s in zip(boxes, scores)
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
