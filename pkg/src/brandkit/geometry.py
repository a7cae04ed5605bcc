"""Axis-aligned box utilities: anchors, deltas, IoU, refinement, NMS.

Boxes use corner form (x1, y1, x2, y2) with a top-left origin. Bulk
operations work on float arrays of shape (n, 4) internally; the public
surface deals in ``Box`` objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# tw/th are clamped so decoded sizes cannot overflow
DELTA_CLAMP = math.log(1000.0 / 16.0)


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"degenerate box: {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "Box":
        return cls(x, y, x + w, y + h)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.width, self.height)

    def clipped(self, width: float, height: float) -> "Box":
        return Box(
            min(max(self.x1, 0.0), width),
            min(max(self.y1, 0.0), height),
            min(max(self.x2, 0.0), width),
            min(max(self.y2, 0.0), height),
        )


@dataclass(frozen=True)
class AnchorLevel:
    stride: int
    scales: tuple[float, ...]
    aspect_ratios: tuple[float, ...]

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be non-empty and positive")
        if not self.aspect_ratios or any(r <= 0 for r in self.aspect_ratios):
            raise ValueError("aspect ratios must be non-empty and positive")


@dataclass(frozen=True)
class AnchorGrid:
    """Pyramid of anchor levels over an image.

    Feature-extraction layers are represented only by their strides;
    no network is involved.
    """

    levels: tuple[AnchorLevel, ...]
    image_width: int
    image_height: int

    def __post_init__(self):
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image size must be positive")
        strides = [lv.stride for lv in self.levels]
        if any(b <= a for a, b in zip(strides, strides[1:])):
            raise ValueError(f"strides must be strictly increasing, got {strides}")


@dataclass(frozen=True)
class RefinedAnchor:
    box: Box
    objectness: float
    deltas_applied: bool = field(default=True)

    def __post_init__(self):
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness must be in [0,1], got {self.objectness}")


def boxes_to_array(boxes) -> np.ndarray:
    return np.array([(b.x1, b.y1, b.x2, b.y2) for b in boxes], dtype=np.float64).reshape(-1, 4)


def array_to_boxes(arr: np.ndarray) -> list[Box]:
    return [Box(*row) for row in np.asarray(arr, dtype=np.float64)]


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when the union has zero area."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between two (n, 4) / (m, 4) corner-form arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def generate_anchors(grid: AnchorGrid) -> list[list[Box]]:
    """One anchor per (cell, scale, ratio) per level, centered on cell centers.

    Cell counts use ceiling division so a stride larger than the image still
    contributes one cell. Anchor area is preserved across aspect ratios:
    for ratio r = h/w, w = scale/sqrt(r) and h = scale*sqrt(r).
    """
    out: list[list[Box]] = []
    for level in grid.levels:
        s = level.stride
        nx = -(-grid.image_width // s)  # ceil
        ny = -(-grid.image_height // s)
        boxes: list[Box] = []
        for iy in range(ny):
            cy = (iy + 0.5) * s
            for ix in range(nx):
                cx = (ix + 0.5) * s
                for scale in level.scales:
                    for ratio in level.aspect_ratios:
                        w = scale / math.sqrt(ratio)
                        h = scale * math.sqrt(ratio)
                        boxes.append(Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
        out.append(boxes)
    return out


def encode_deltas(anchor: Box, target: Box) -> tuple[float, float, float, float]:
    """Standard R-CNN box parameterization of target relative to anchor."""
    wa, ha = anchor.width, anchor.height
    if wa <= 0 or ha <= 0:
        raise ValueError("anchor must have positive width and height")
    wt, ht = target.width, target.height
    if wt <= 0 or ht <= 0:
        raise ValueError("target must have positive width and height")
    cxa, cya = anchor.center
    cxt, cyt = target.center
    return (
        (cxt - cxa) / wa,
        (cyt - cya) / ha,
        math.log(wt / wa),
        math.log(ht / ha),
    )


def decode_deltas(anchor: Box, deltas) -> Box:
    """Inverse of :func:`encode_deltas`; tw/th clamped to avoid overflow."""
    tx, ty, tw, th = deltas
    wa, ha = anchor.width, anchor.height
    cxa, cya = anchor.center
    tw = min(tw, DELTA_CLAMP)
    th = min(th, DELTA_CLAMP)
    w = wa * math.exp(tw)
    h = ha * math.exp(th)
    cx = cxa + tx * wa
    cy = cya + ty * ha
    return Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def refine_anchors(
    anchors: list[Box],
    objectness,
    deltas,
    negative_threshold: float,
    image_size: tuple[int, int] | None = None,
) -> list[RefinedAnchor]:
    """Drop confident-background anchors, adjust survivors, clip to image.

    ``objectness`` holds foreground probabilities; an anchor is discarded
    when its background probability 1 - p exceeds ``negative_threshold``.
    Output preserves input order. ``image_size`` is (width, height); no
    clipping when omitted.
    """
    if not 0.0 < negative_threshold < 1.0:
        raise ValueError(f"negative_threshold must be in (0,1), got {negative_threshold}")
    objectness = np.asarray(objectness, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    if not (len(anchors) == len(objectness) == len(deltas)):
        raise ValueError(
            f"length mismatch: {len(anchors)} anchors, {len(objectness)} scores, {len(deltas)} deltas"
        )
    out: list[RefinedAnchor] = []
    for anchor, p, d in zip(anchors, objectness, deltas):
        if 1.0 - p > negative_threshold:
            continue
        box = decode_deltas(anchor, d)
        if image_size is not None:
            box = box.clipped(image_size[0], image_size[1])
        out.append(RefinedAnchor(box=box, objectness=float(p)))
    return out


def nms(boxes: list[Box], scores, iou_threshold: float) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices.

    Candidates are visited by descending score with ties broken by lower
    index; a candidate is suppressed when its IoU with an already kept box
    is strictly greater than the threshold.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0,1], got {iou_threshold}")
    scores = np.asarray(scores, dtype=np.float64)
    if len(boxes) != len(scores):
        raise ValueError(f"length mismatch: {len(boxes)} boxes, {len(scores)} scores")
    if len(boxes) == 0:
        return []
    arr = boxes_to_array(boxes)
    order = np.lexsort((np.arange(len(scores)), -scores))
    kept: list[int] = []
    for i in order:
        box_i = arr[i]
        suppressed = False
        for j in kept:
            if pairwise_iou(box_i[None, :], arr[j][None, :])[0, 0] > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(int(i))
    return kept
