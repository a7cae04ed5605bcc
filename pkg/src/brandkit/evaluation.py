"""COCO-style detection evaluation: greedy matching, AP, mAP(0.5:0.95).

Average precision uses all-point (continuous) interpolation rather than
COCO's 101-point grid. Evaluation runs at the finest label level; when a
taxonomy is supplied the report also carries brand- and type-level mAP
roll-ups. Detections under the confidence threshold are dropped before
matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ImageRecord, Taxonomy
from .geometry import Box, pairwise_iou

IOU_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
DEFAULT_CONFIDENCE = 0.5


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: Box
    label: int
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    box: Box
    label: int


@dataclass(frozen=True)
class EvalReport:
    per_class_ap: dict  # label -> {iou threshold -> AP}
    map_5095: float
    per_level_map: dict  # level name -> mAP
    true_positives: int  # at IoU 0.5
    false_positives: int
    false_negatives: int
    num_classes: int
    no_ground_truth: bool
    iou_thresholds: tuple
    confidence_threshold: float

    def as_dict(self) -> dict:
        return {
            "map_5095": self.map_5095,
            "per_level_map": dict(self.per_level_map),
            "per_class_ap": {
                str(label): {f"{iou:.2f}": ap for iou, ap in by_iou.items()}
                for label, by_iou in self.per_class_ap.items()
            },
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "num_classes": self.num_classes,
            "no_ground_truth": self.no_ground_truth,
            "iou_thresholds": list(self.iou_thresholds),
            "confidence_threshold": self.confidence_threshold,
        }


def ground_truths_from_records(records) -> list[GroundTruth]:
    """Logo-level ground truths from loaded image records."""
    out = []
    for rec in records:
        for ann in rec.annotations:
            out.append(GroundTruth(image_id=rec.image_id, box=ann.corner_box(),
                                   label=ann.logo_id))
    return out


def match_detections(dets, gts, iou_threshold: float) -> np.ndarray:
    """TP/FP flags for detections taken in descending-confidence order.

    Each detection greedily claims the not-yet-matched ground truth of the
    same image and class with the highest IoU >= threshold. Returns a bool
    array aligned with the detections sorted by (-confidence, input index).
    """
    dets = list(dets)
    gts = list(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    by_image_class: dict[tuple[str, int], list[int]] = {}
    for gi, gt in enumerate(gts):
        by_image_class.setdefault((gt.image_id, gt.label), []).append(gi)
    gt_boxes = np.array(
        [(g.box.x1, g.box.y1, g.box.x2, g.box.y2) for g in gts], dtype=np.float64
    ).reshape(-1, 4)
    matched: set[int] = set()
    flags = np.zeros(len(dets), dtype=bool)
    for rank, di in enumerate(order):
        det = dets[di]
        candidates = by_image_class.get((det.image_id, det.label), [])
        free = [gi for gi in candidates if gi not in matched]
        if not free:
            continue
        det_arr = np.array(
            [[det.box.x1, det.box.y1, det.box.x2, det.box.y2]], dtype=np.float64
        )
        ious = pairwise_iou(det_arr, gt_boxes[free])[0]
        best = int(np.argmax(ious))
        if ious[best] >= iou_threshold:
            matched.add(free[best])
            flags[rank] = True
    return flags


def average_precision(flags, num_gt: int) -> float:
    """Area under the precision-recall curve with right-to-left max
    interpolation over every recall point."""
    if num_gt < 0:
        raise ValueError(f"num_gt must be >= 0, got {num_gt}")
    flags = np.asarray(flags, dtype=bool)
    if num_gt == 0 or flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    precision = tp / (tp + fp)
    recall = tp / num_gt
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * interp))


def evaluate(
    dets,
    gts,
    confidence_threshold: float = DEFAULT_CONFIDENCE,
    iou_thresholds=IOU_GRID,
    taxonomy: Taxonomy | None = None,
) -> EvalReport:
    """Full report: per-class AP per IoU threshold, mAP, level roll-ups.

    mAP averages over the classes present in the ground truth and over
    every threshold in ``iou_thresholds``. With an empty ground truth the
    report carries zero classes and the ``no_ground_truth`` flag.
    """
    dets = [d for d in dets if d.confidence >= confidence_threshold]
    gts = list(gts)
    iou_thresholds = tuple(iou_thresholds)
    if not iou_thresholds:
        raise ValueError("iou_thresholds must be non-empty")

    def map_at_level(det_list, gt_list) -> tuple[float, dict]:
        classes = sorted({g.label for g in gt_list})
        per_class: dict[int, dict[float, float]] = {}
        if not classes:
            return 0.0, per_class
        for label in classes:
            d_c = [d for d in det_list if d.label == label]
            g_c = [g for g in gt_list if g.label == label]
            per_class[label] = {
                t: average_precision(match_detections(d_c, g_c, t), len(g_c))
                for t in iou_thresholds
            }
        total = sum(ap for by_iou in per_class.values() for ap in by_iou.values())
        return total / (len(classes) * len(iou_thresholds)), per_class

    map_5095, per_class_ap = map_at_level(dets, gts)
    per_level = {"logo": map_5095}
    if taxonomy is not None:
        for level, mapper in (
            ("brand", lambda lab: taxonomy.brand_of(lab)),
            ("type", lambda lab: taxonomy.type_of(taxonomy.brand_of(lab))),
        ):
            lvl_dets = [
                Detection(d.image_id, d.box, mapper(d.label), d.confidence) for d in dets
            ]
            lvl_gts = [GroundTruth(g.image_id, g.box, mapper(g.label)) for g in gts]
            per_level[level] = map_at_level(lvl_dets, lvl_gts)[0]

    flags_05 = match_detections(dets, gts, 0.5)
    tp = int(flags_05.sum())
    return EvalReport(
        per_class_ap=per_class_ap,
        map_5095=map_5095,
        per_level_map=per_level,
        true_positives=tp,
        false_positives=len(dets) - tp,
        false_negatives=len(gts) - tp,
        num_classes=len(per_class_ap),
        no_ground_truth=len(gts) == 0,
        iou_thresholds=iou_thresholds,
        confidence_threshold=confidence_threshold,
    )


def format_eval_report(report: EvalReport) -> str:
    lines = [f"mAP(0.5:0.95)={report.map_5095:.6f}"]
    for level in ("logo", "brand", "type"):
        if level in report.per_level_map:
            lines.append(f"map_{level}={report.per_level_map[level]:.6f}")
    lines.append(f"classes={report.num_classes}")
    lines.append(f"tp@0.5={report.true_positives}")
    lines.append(f"fp@0.5={report.false_positives}")
    lines.append(f"fn@0.5={report.false_negatives}")
    if report.no_ground_truth:
        lines.append("warning=no_ground_truth")
    return "\n".join(lines) + "\n"
