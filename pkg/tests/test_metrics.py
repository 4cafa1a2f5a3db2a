import numpy as np
import pytest

import ap_oracle
from ovitrap import (
    ConfigError,
    EggInstance,
    SchemaError,
    average_precision,
    evaluate,
    mask_iou,
    match_greedy,
    parse_ground_truth,
)
from ovitrap.metrics import IOU_THRESHOLDS


def square(x0, y0, side):
    return np.array(
        [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]], float
    )


def rect_ring(r):
    x0, y0, x1, y1 = r
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float)


def det(ring, score, cls="full", frame=0, idx=0):
    return EggInstance(
        id=idx, egg_class=cls, score=score, mask=(np.asarray(ring, float),), frame=frame
    )


class TestMaskIoU:
    def test_identical(self):
        assert mask_iou([square(0, 0, 4)], [square(0, 0, 4)], 1.0) == 1.0

    def test_disjoint(self):
        assert mask_iou([square(0, 0, 4)], [square(10, 0, 4)], 1.0) == 0.0

    def test_hand_counted_third(self):
        a = [square(0, 0, 4)]
        b = [rect_ring((2, 0, 6, 4))]
        assert mask_iou(a, b, 1.0) == pytest.approx(8 / 24, abs=1e-12)

    def test_symmetry_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            ax = np.sort(rng.integers(0, 20, 2))
            ay = np.sort(rng.integers(0, 20, 2))
            bx = np.sort(rng.integers(0, 20, 2))
            by = np.sort(rng.integers(0, 20, 2))
            a = [rect_ring((ax[0], ay[0], ax[1] + 1, ay[1] + 1))]
            b = [rect_ring((bx[0], by[0], bx[1] + 1, by[1] + 1))]
            assert mask_iou(a, b, 1.0) == mask_iou(b, a, 1.0)
            assert mask_iou(a, a, 1.0) == 1.0

    def test_zero_area_rejected(self):
        degenerate = np.array([[0, 0], [1, 0], [2, 0]], float)
        with pytest.raises(ConfigError):
            mask_iou([degenerate], [square(0, 0, 1)], 1.0)


class TestMatchGreedy:
    def test_exact_match_is_tp(self):
        d = [det(square(0, 0, 4), 0.9)]
        g = [det(square(0, 0, 4), 1.0)]
        result = match_greedy(d, g, 0.5)
        assert result.matched_gt == (0,)
        assert result.gt_matched == (True,)

    def test_higher_score_matches_first(self):
        # Both detections overlap the single gt; the 0.9-score one takes it
        # even though the 0.8-score one has higher IoU.
        g = [det(rect_ring((0, 0, 10, 10)), 1.0)]
        d_hi = det(rect_ring((0, 0, 10, 9)), 0.9, idx=0)   # IoU 0.9
        d_lo = det(rect_ring((0, 0, 10, 19)), 0.8, idx=1)  # IoU ~0.53
        result = match_greedy([d_hi, d_lo], g, 0.5)
        assert result.det_order == (0, 1)
        assert result.matched_gt == (0, None)

    def test_threshold_boundary_is_fp(self):
        # IoU = 49/100 < 0.5.
        d = [det(rect_ring((0, 0, 7, 7)), 0.9)]
        g = [det(rect_ring((0, 0, 10, 10)), 1.0)]
        assert mask_iou(d[0].mask, g[0].mask, 1.0) == pytest.approx(0.49)
        result = match_greedy(d, g, 0.5)
        assert result.matched_gt == (None,)
        result = match_greedy(d, g, 0.49)
        assert result.matched_gt == (0,)

    def test_score_scaling_invariance(self):
        g = [det(square(0, 0, 4), 1.0), det(square(10, 0, 4), 1.0)]
        d = [det(square(0, 0, 4), 0.6, idx=0), det(square(10, 0, 4), 0.3, idx=1)]
        scaled = [det(square(0, 0, 4), 0.2, idx=0), det(square(10, 0, 4), 0.1, idx=1)]
        assert match_greedy(d, g, 0.5) == match_greedy(scaled, g, 0.5)

    def test_tie_keeps_insertion_order(self):
        g = [det(square(0, 0, 4), 1.0)]
        d = [det(square(0, 0, 4), 0.5, idx=0), det(square(0, 0, 4), 0.5, idx=1)]
        result = match_greedy(d, g, 0.5)
        assert result.det_order == (0, 1)
        assert result.matched_gt == (0, None)


class TestAveragePrecision:
    def test_perfect(self):
        assert average_precision([(0.9, True), (0.8, True)], 2) == 1.0

    def test_no_detections(self):
        assert average_precision([], 3) == 0.0

    def test_lower_scored_tp_gives_half(self):
        # FP at higher score, TP at lower: precision 0.5 at recall 1.
        assert average_precision([(0.9, False), (0.5, True)], 1) == pytest.approx(0.5)

    def test_no_ground_truth_rejected(self):
        with pytest.raises(ConfigError):
            average_precision([(0.9, True)], 0)

    def test_appending_lowest_fp_never_increases(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n_gt = int(rng.integers(1, 6))
            records = [
                (float(rng.random()), bool(rng.random() < 0.6))
                for _ in range(int(rng.integers(0, 8)))
            ]
            base = average_precision(records, n_gt)
            lowest = min((s for s, _ in records), default=1.0)
            worse = average_precision(records + [(lowest / 2, False)], n_gt)
            assert worse <= base + 1e-12

    def test_removing_tp_never_increases(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n_gt = int(rng.integers(2, 6))
            records = [
                (float(rng.random()), bool(rng.random() < 0.6))
                for _ in range(int(rng.integers(1, 8)))
            ]
            tps = [i for i, (_, tp) in enumerate(records) if tp]
            if not tps:
                continue
            base = average_precision(records, n_gt)
            removed = [r for i, r in enumerate(records) if i != tps[0]]
            assert average_precision(removed, n_gt) <= base + 1e-12


def build_eval_case(rng, n_images=1):
    """Random rectangles per class per image; returns (dets_per_image, gt_doc,
    oracle per-class images dict)."""
    images, annotations = [], []
    dets_per_image = {}
    oracle_images = {"hatch": {}, "full": {}}
    ann_id = 1
    for img_id in range(1, n_images + 1):
        images.append(
            {"id": img_id, "file_name": f"img_{img_id}.png", "width": 48, "height": 48}
        )
        dets = []
        for cat_id, cls in ((1, "hatch"), (2, "full")):
            n_gt = int(rng.integers(1, 9))
            n_det = int(rng.integers(0, 9))
            gts = []
            for _ in range(n_gt):
                x0, y0 = rng.integers(0, 36, 2)
                w, h = rng.integers(2, 12, 2)
                rect = (int(x0), int(y0), int(x0 + w), int(y0 + h))
                gts.append(rect)
                annotations.append(
                    {
                        "id": ann_id,
                        "image_id": img_id,
                        "category_id": cat_id,
                        "segmentation": [
                            [rect[0], rect[1], rect[2], rect[1], rect[2], rect[3], rect[0], rect[3]]
                        ],
                        "area": (rect[2] - rect[0]) * (rect[3] - rect[1]),
                    }
                )
                ann_id += 1
            class_dets = []
            for _ in range(n_det):
                if gts and rng.random() < 0.7:
                    gx0, gy0, gx1, gy1 = gts[int(rng.integers(0, len(gts)))]
                    dx, dy = rng.integers(-3, 4, 2)
                    rect = (
                        max(0, gx0 + int(dx)),
                        max(0, gy0 + int(dy)),
                        max(1, gx1 + int(dx)),
                        max(1, gy1 + int(dy)),
                    )
                else:
                    x0, y0 = rng.integers(0, 36, 2)
                    w, h = rng.integers(2, 12, 2)
                    rect = (int(x0), int(y0), int(x0 + w), int(y0 + h))
                if rect[2] <= rect[0] or rect[3] <= rect[1]:
                    continue
                score = float(rng.random())
                class_dets.append((score, rect))
            oracle_images[cls][img_id] = (class_dets, gts)
            for k, (score, rect) in enumerate(class_dets):
                dets.append(det(rect_ring(rect), score, cls=cls, frame=img_id, idx=len(dets)))
        dets_per_image[img_id] = dets
    gt_doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "hatch"}, {"id": 2, "name": "full"}],
    }
    return dets_per_image, gt_doc, oracle_images


def assert_matches_oracle(seed, n_images=1):
    rng = np.random.default_rng(seed)
    dets_per_image, gt_doc, oracle_images = build_eval_case(rng, n_images)
    gt = parse_ground_truth(gt_doc)
    report = evaluate(dets_per_image, gt, pitch=1.0)
    expected = {
        cls: ap_oracle.evaluate_rects(oracle_images[cls], IOU_THRESHOLDS)
        for cls in ("hatch", "full")
    }
    for cls in ("hatch", "full"):
        for thr in IOU_THRESHOLDS:
            assert abs(report.per_class[cls][thr] - expected[cls][thr]) <= 1e-9, (
                f"class {cls} thr {thr}: {report.per_class[cls][thr]} vs oracle "
                f"{expected[cls][thr]} (seed {seed})"
            )
    exp_map50 = float(np.mean([expected[c][0.5] for c in ("hatch", "full")]))
    exp_map = float(np.mean([v for c in ("hatch", "full") for v in expected[c].values()]))
    assert abs(report.map_50 - exp_map50) <= 1e-9
    assert abs(report.map_5095 - exp_map) <= 1e-9


class TestEvaluate:
    def test_detections_equal_ground_truth(self):
        rng = np.random.default_rng(5)
        _, gt_doc, _ = build_eval_case(rng)
        gt = parse_ground_truth(gt_doc)
        dets_per_image = {img_id: list(insts) for img_id, insts in gt.by_image.items()}
        report = evaluate(dets_per_image, gt, pitch=1.0)
        assert report.map_50 == 1.0
        assert report.map_5095 == 1.0

    def test_empty_detections(self):
        rng = np.random.default_rng(6)
        _, gt_doc, _ = build_eval_case(rng)
        gt = parse_ground_truth(gt_doc)
        report = evaluate({}, gt, pitch=1.0)
        assert report.map_50 == 0.0
        assert report.map_5095 == 0.0

    def test_matches_brute_force_oracle_sample(self):
        for seed in range(40):
            assert_matches_oracle(seed, n_images=1 + seed % 2)

    def test_unknown_class_rejected(self):
        rng = np.random.default_rng(7)
        dets_per_image, gt_doc, _ = build_eval_case(rng)
        gt = parse_ground_truth(gt_doc)
        bad = dict(dets_per_image)
        bad[1] = [det(square(0, 0, 4), 0.5, cls="full")]
        bad[1][0].egg_class = "larva"
        with pytest.raises(SchemaError, match="larva"):
            evaluate(bad, gt, pitch=1.0)

    def test_report_json_shape(self):
        rng = np.random.default_rng(8)
        dets_per_image, gt_doc, _ = build_eval_case(rng)
        gt = parse_ground_truth(gt_doc)
        doc = evaluate(dets_per_image, gt, pitch=1.0).to_json()
        assert set(doc) == {"per_class", "map_50", "map_5095"}
        assert set(doc["per_class"]) == {"hatch", "full"}
        assert set(doc["per_class"]["hatch"]["ap"]) == {
            "0.50", "0.55", "0.60", "0.65", "0.70", "0.75", "0.80", "0.85", "0.90", "0.95",
        }
        assert 0.0 <= doc["map_50"] <= 1.0
        assert 0.0 <= doc["map_5095"] <= 1.0

    def test_map_hierarchy_statistical(self):
        # Greedy matching makes map_5095 <= map_50 an empirical, not
        # axiomatic, property; violations are recorded rather than failed.
        violations = []
        for seed in range(30):
            rng = np.random.default_rng(100 + seed)
            dets_per_image, gt_doc, _ = build_eval_case(rng)
            report = evaluate(dets_per_image, parse_ground_truth(gt_doc), pitch=1.0)
            if report.map_5095 > report.map_50 + 1e-12:
                violations.append(seed)
        if violations:  # pragma: no cover
            print(f"map_5095 > map_50 on seeds {violations} (logged, not failed)")
