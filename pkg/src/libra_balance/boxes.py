"""Box geometry, IoU and max-IoU ground-truth assignment.

Coordinates are continuous ``(x1, y1, x2, y2)`` with no +1 pixel convention.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Box2D",
    "Label",
    "Candidate",
    "AssignConfig",
    "iou",
    "iou_matrix",
    "assign",
    "assign_arrays",
    "as_array",
]


@dataclass(frozen=True)
class Box2D:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite: {coords}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box must satisfy x2 >= x1 and y2 >= y1: {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def scaled(self, factor: float) -> Box2D:
        return Box2D(self.x1 * factor, self.y1 * factor, self.x2 * factor, self.y2 * factor)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


class Label(enum.IntEnum):
    NEGATIVE = 0
    POSITIVE = 1
    IGNORED = -1


@dataclass(frozen=True)
class Candidate:
    """A sampling candidate after assignment."""

    box: Box2D
    gt_index: int | None
    iou: float
    label: Label

    def __post_init__(self):
        if not 0.0 <= self.iou <= 1.0:
            raise ValueError(f"iou must lie in [0, 1], got {self.iou}")
        if self.label == Label.POSITIVE and self.gt_index is None:
            raise ValueError("a positive candidate needs a ground-truth index")


@dataclass(frozen=True)
class AssignConfig:
    pos_iou_threshold: float = 0.5
    neg_iou_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.neg_iou_threshold <= self.pos_iou_threshold <= 1.0:
            raise ValueError(
                "need 0 <= neg_iou_threshold <= pos_iou_threshold <= 1, got "
                f"({self.neg_iou_threshold}, {self.pos_iou_threshold})"
            )
        if self.pos_iou_threshold <= 0.0:
            raise ValueError("pos_iou_threshold must be > 0")


def iou(a: Box2D, b: Box2D) -> float:
    """Intersection over union; 0 when the union has zero area."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def as_array(boxes: Sequence[Box2D] | np.ndarray) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float64 array."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=np.float64)
    else:
        arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` box arrays, shape ``(n, m)``."""
    a = as_array(a)
    b = as_array(b)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return np.minimum(out, 1.0)


def assign_arrays(candidates, gts, cfg: AssignConfig = AssignConfig()):
    """Vectorised assignment.

    Returns ``(gt_index, iou, label)`` arrays; ``gt_index`` is -1 when there
    are no ground truths. Ties go to the lowest ground-truth index.
    """
    cand = as_array(candidates)
    gt = as_array(gts)
    n = cand.shape[0]
    if gt.shape[0] == 0:
        return (
            np.full(n, -1, dtype=np.int64),
            np.zeros(n),
            np.full(n, int(Label.NEGATIVE), dtype=np.int64),
        )
    overlaps = iou_matrix(cand, gt)
    best = overlaps.argmax(axis=1)
    best_iou = overlaps[np.arange(n), best]
    labels = np.full(n, int(Label.IGNORED), dtype=np.int64)
    labels[best_iou >= cfg.pos_iou_threshold] = int(Label.POSITIVE)
    labels[best_iou < cfg.neg_iou_threshold] = int(Label.NEGATIVE)
    return best.astype(np.int64), best_iou, labels


def assign(
    candidates: Sequence[Box2D], gts: Sequence[Box2D], cfg: AssignConfig = AssignConfig()
) -> list[Candidate]:
    """Label each candidate box by its best-overlapping ground truth."""
    if not candidates:
        return []
    gt_index, overlaps, labels = assign_arrays(candidates, gts, cfg)
    return [
        Candidate(
            box=box,
            gt_index=None if gi < 0 else int(gi),
            iou=float(ov),
            label=Label(int(lab)),
        )
        for box, gi, ov, lab in zip(candidates, gt_index, overlaps, labels)
    ]
