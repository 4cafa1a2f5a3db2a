"""Mask IoU, greedy matching, and average-precision evaluation.

AP uses 101-point interpolation over the recall grid {0, 0.01, ..., 1.00}
with a monotone non-increasing precision envelope — the de-facto benchmark
convention for the mAP@.5 / mAP@.5:.95 numbers this module reports. IoU is
mask IoU on a shared raster whose pitch defaults to one detection pixel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import polygons as pg
from .detections import EggInstance, GroundTruthSet
from .errors import ConfigError, SchemaError

IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
# Recall grid {0, 0.01, ..., 1.00}; divide rather than linspace so each value
# is exactly k/100 in floating point.
RECALL_GRID = np.arange(101) / 100.0


def mask_iou(mask_a, mask_b, pitch: float) -> float:
    """Intersection-over-union of two polygon masks on a shared grid.

    The grid covers the joint bounding box at the given pitch, so the
    result is symmetric and iou(a, a) == 1 exactly.
    """
    if pitch <= 0:
        raise ConfigError("raster pitch must be positive")
    if pg.mask_area(mask_a) <= 0.0 or pg.mask_area(mask_b) <= 0.0:
        raise ConfigError("mask IoU needs positive-area masks")
    ax0, ay0, ax1, ay1 = pg.mask_bbox(mask_a)
    bx0, by0, bx1, by1 = pg.mask_bbox(mask_b)
    if ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0:
        return 0.0  # disjoint bounding boxes: no shared raster needed
    bbox = (min(ax0, bx0), min(ay0, by0), max(ax1, bx1), max(ay1, by1))
    x0, y0, nx, ny = pg.raster_grid(bbox, pitch, pad_cells=0)
    ra = pg.rasterize_mask(mask_a, x0, y0, nx, ny, pitch)
    rb = pg.rasterize_mask(mask_b, x0, y0, nx, ny, pitch)
    union = np.count_nonzero(ra | rb)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(ra & rb) / union)


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of one image's detections to its ground truths.

    det_order holds detection indices sorted by descending score (ties keep
    insertion order); matched_gt[i] is the ground-truth index matched by
    det_order[i] or None; gt_matched flags each ground truth.
    """

    det_order: tuple[int, ...]
    matched_gt: tuple[int | None, ...]
    gt_matched: tuple[bool, ...]


def iou_matrix(
    dets: Sequence[EggInstance], gts: Sequence[EggInstance], pitch: float
) -> np.ndarray:
    m = np.zeros((len(dets), len(gts)))
    for i, det in enumerate(dets):
        for j, gt in enumerate(gts):
            m[i, j] = mask_iou(det.mask, gt.mask, pitch)
    return m


def match_greedy(
    dets: Sequence[EggInstance],
    gts: Sequence[EggInstance],
    iou_threshold: float,
    pitch: float = 1.0,
    ious: np.ndarray | None = None,
) -> MatchResult:
    """Match detections to ground truths, best score first.

    Each detection takes the unmatched ground truth of highest IoU provided
    that IoU reaches the threshold; otherwise it is a false positive.
    """
    if ious is None:
        ious = iou_matrix(dets, gts, pitch)
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    matched: list[int | None] = []
    for i in order:
        best_j: int | None = None
        best_iou = iou_threshold  # a match must reach the threshold
        for j in range(len(gts)):
            if taken[j]:
                continue
            v = ious[i, j]
            if (best_j is None and v >= best_iou) or v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None:
            taken[best_j] = True
        matched.append(best_j)
    return MatchResult(
        det_order=tuple(order),
        matched_gt=tuple(matched),
        gt_matched=tuple(taken),
    )


def average_precision(det_records: Sequence[tuple[float, bool]], n_gt: int) -> float:
    """AP from pooled (score, is_true_positive) records of one class.

    Records are sorted by descending score (stable, so equal scores keep
    their accumulation order); precision is made monotone from the right
    and sampled on the 101-point recall grid.
    """
    if n_gt <= 0:
        raise ConfigError("average precision is undefined without ground truths")
    if not det_records:
        return 0.0
    order = sorted(range(len(det_records)), key=lambda i: -det_records[i][0])
    flags = np.array([det_records[i][1] for i in order], dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    precision = tp / (tp + fp)
    recall = tp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # Precision at each grid recall: the envelope at the first point whose
    # recall reaches it, zero beyond the achieved recall.
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


@dataclass(frozen=True)
class EvalReport:
    """Per-class AP per IoU threshold plus the two headline means."""

    per_class: dict[str, dict[float, float]]
    map_50: float
    map_5095: float

    def to_json(self) -> dict:
        return {
            "per_class": {
                cls: {"ap": {f"{t:.2f}": ap for t, ap in sorted(aps.items())}}
                for cls, aps in sorted(self.per_class.items())
            },
            "map_50": self.map_50,
            "map_5095": self.map_5095,
        }


def evaluate(
    dets_per_image: Mapping[int, Sequence[EggInstance]],
    gt: GroundTruthSet,
    thresholds: Sequence[float] = IOU_THRESHOLDS,
    pitch: float = 1.0,
) -> EvalReport:
    """COCO-style evaluation of detections against a ground-truth set.

    Detections are keyed by ground-truth image id. Classes with zero ground
    truths are excluded from the means; an unknown detection class is a
    schema error.
    """
    classes = sorted(set(gt.categories.values()))
    for img_id, dets in dets_per_image.items():
        if img_id not in gt.images:
            raise SchemaError(f"detections: unknown image id {img_id}")
        for det in dets:
            if det.egg_class not in classes:
                raise SchemaError(
                    f"detections: class {det.egg_class!r} not in ground truth"
                )

    per_class: dict[str, dict[float, float]] = {}
    for cls in classes:
        gts_by_img = {
            img_id: [g for g in insts if g.egg_class == cls]
            for img_id, insts in gt.by_image.items()
        }
        n_gt = sum(len(v) for v in gts_by_img.values())
        if n_gt == 0:
            continue
        dets_by_img = {
            img_id: [d for d in dets_per_image.get(img_id, []) if d.egg_class == cls]
            for img_id in gt.images
        }
        ious_by_img = {
            img_id: iou_matrix(dets_by_img[img_id], gts_by_img[img_id], pitch)
            for img_id in gt.images
            if dets_by_img[img_id]
        }
        aps: dict[float, float] = {}
        for thr in thresholds:
            records: list[tuple[float, bool]] = []
            # Accumulate images in sorted-id order so results are
            # independent of mapping iteration order.
            for img_id in sorted(gt.images):
                dets = dets_by_img[img_id]
                if not dets:
                    continue
                result = match_greedy(
                    dets, gts_by_img[img_id], thr, pitch, ious=ious_by_img[img_id]
                )
                for pos, det_idx in enumerate(result.det_order):
                    records.append(
                        (dets[det_idx].score, result.matched_gt[pos] is not None)
                    )
            aps[thr] = average_precision(records, n_gt)
        per_class[cls] = aps

    if not per_class:
        raise ConfigError("evaluation needs at least one class with ground truths")
    map_50 = float(np.mean([aps[0.5] for aps in per_class.values()]))
    map_5095 = float(
        np.mean([ap for aps in per_class.values() for ap in aps.values()])
    )
    return EvalReport(per_class=per_class, map_50=map_50, map_5095=map_5095)
