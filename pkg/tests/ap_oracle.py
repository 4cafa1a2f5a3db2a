"""Brute-force PR/AP oracle, implemented independently of the library
evaluator and kept deliberately naive.

Test cases use axis-aligned integer rectangles so the oracle's IoU is
analytic (no rasterization) while the evaluator's raster IoU is exact on
the same inputs; any disagreement therefore isolates the matching/AP logic.
"""
from __future__ import annotations

Rect = tuple[int, int, int, int]  # x0, y0, x1, y1


def rect_area(r: Rect) -> int:
    return (r[2] - r[0]) * (r[3] - r[1])


def rect_iou(a: Rect, b: Rect) -> float:
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = rect_area(a) + rect_area(b) - inter
    return inter / union if union else 0.0


def greedy_trace(
    dets: list[tuple[float, Rect]], gts: list[Rect], thr: float
) -> list[tuple[float, bool]]:
    """Walk detections by descending score; each takes the unmatched ground
    truth of highest IoU if it reaches the threshold. Returns (score, tp)."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i][0])
    used: set[int] = set()
    out = []
    for i in order:
        best_j, best_iou = None, thr
        for j, g in enumerate(gts):
            if j in used:
                continue
            v = rect_iou(dets[i][1], g)
            if (best_j is None and v >= best_iou) or v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None:
            used.add(best_j)
        out.append((dets[i][0], best_j is not None))
    return out


def ap_101(records: list[tuple[float, bool]], n_gt: int) -> float:
    """101-point interpolated AP by direct enumeration: for every grid
    recall, scan all prefixes and take the best precision among those whose
    recall reaches it."""
    assert n_gt > 0
    if not records:
        return 0.0
    recs = sorted(records, key=lambda r: -r[0])
    total = 0.0
    for k in range(101):
        r = k / 100.0
        best = 0.0
        tp = fp = 0
        for _, is_tp in recs:
            if is_tp:
                tp += 1
            else:
                fp += 1
            if tp / n_gt >= r:
                best = max(best, tp / (tp + fp))
        total += best
    return total / 101.0


def evaluate_rects(
    images: dict[int, tuple[list[tuple[float, Rect]], list[Rect]]],
    thresholds: tuple[float, ...],
) -> dict[float, float]:
    """AP per threshold for one class over several images of (dets, gts)."""
    n_gt = sum(len(gts) for _, gts in images.values())
    assert n_gt > 0
    out = {}
    for thr in thresholds:
        records: list[tuple[float, bool]] = []
        for img_id in sorted(images):
            dets, gts = images[img_id]
            records.extend(greedy_trace(dets, gts, thr))
        out[thr] = ap_101(records, n_gt)
    return out
