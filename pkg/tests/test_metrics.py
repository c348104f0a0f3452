from __future__ import annotations

import pytest

from conftest import make_dataset, random_scene
from oracles import numeric_all_point_ap, oracle_evaluate, sampled_ap
from verilabel.errors import InputError
from verilabel.metrics import (
    Detection,
    EvalConfig,
    Interpolation,
    average_precision,
    evaluate,
    match_detections,
)
from verilabel.model import Annotation, BBox


def det(box, cat=1, score=0.9):
    return Detection(BBox.abs_corner(*box), cat, score)


def ann(box, cat=1, image_id="im0"):
    return Annotation(cat, f"c{cat}", BBox.abs_corner(*box), image_id)


class TestMatchDetections:
    def test_single_match(self):
        flags = match_detections([det((0, 0, 10, 10))], [ann((0, 0, 10, 11))], 0.5)
        assert flags == [True]

    def test_greedy_one_match_per_gt(self):
        dets = [det((0, 0, 10, 10), score=0.9), det((0, 0, 10, 12), score=0.8)]
        flags = match_detections(dets, [ann((0, 0, 10, 10))], 0.5)
        assert flags == [True, False]

    def test_class_absent_from_gt_is_fp(self):
        flags = match_detections([det((0, 0, 10, 10), cat=9)], [ann((0, 0, 10, 10), cat=1)], 0.5)
        assert flags == [False]

    def test_sorted_by_score(self):
        dets = [det((50, 50, 60, 60), score=0.2), det((0, 0, 10, 10), score=0.9)]
        flags = match_detections(dets, [ann((0, 0, 10, 10))], 0.5)
        assert flags == [True, False]  # high-score TP first

    def test_prefers_highest_iou_gt(self):
        gts = [ann((0, 0, 10, 10)), ann((0, 0, 10, 9))]
        flags = match_detections([det((0, 0, 10, 10), score=0.9)], gts, 0.5)
        assert flags == [True]


class TestAveragePrecision:
    def test_perfect(self):
        assert average_precision([True], 1) == 1.0

    def test_fp_then_tp_all_point(self):
        assert average_precision([False, True], 1, Interpolation.ALL_POINT) == pytest.approx(0.5)

    def test_tp_then_fp_all_point(self):
        assert average_precision([True, False], 1, Interpolation.ALL_POINT) == pytest.approx(1.0)

    def test_zero_gt(self):
        assert average_precision([False, False], 0) == 0.0
        assert average_precision([], 0) == 0.0

    def test_matches_numeric_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 40))
            flags = [bool(rng.random() < 0.5) for _ in range(n)]
            num_gt = max(sum(flags), int(rng.integers(1, 25)))
            impl = average_precision(flags, num_gt, Interpolation.ALL_POINT)
            assert impl == pytest.approx(numeric_all_point_ap(flags, num_gt), abs=1e-9)
            impl101 = average_precision(flags, num_gt, Interpolation.COCO101)
            assert impl101 == pytest.approx(sampled_ap(flags, num_gt, 101), abs=1e-12)

    def test_adding_top_tp_never_decreases(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 30))
            flags = [bool(rng.random() < 0.5) for _ in range(n)]
            num_gt = max(sum(flags) + 1, int(rng.integers(1, 25)))
            before = average_precision(flags, num_gt, Interpolation.ALL_POINT)
            after = average_precision([True] + flags, num_gt, Interpolation.ALL_POINT)
            assert after >= before - 1e-12

    def test_coco101_close_to_all_point_on_dense_curves(self, rng):
        for _ in range(10):
            n = 400
            flags = [bool(rng.random() < 0.6) for _ in range(n)]
            num_gt = max(sum(flags), 200)
            dense = average_precision(flags, num_gt, Interpolation.ALL_POINT)
            sampled = average_precision(flags, num_gt, Interpolation.COCO101)
            assert abs(dense - sampled) <= 0.01

    def test_voc11_differs_but_bounded(self):
        flags = [True, False, True, False]
        ap11 = average_precision(flags, 3, Interpolation.VOC11)
        assert 0.0 <= ap11 <= 1.0


class TestEvaluate:
    def test_gt_as_detections_is_perfect(self):
        ds = make_dataset(
            {"a": [(1, (0, 0, 50, 50)), (2, (60, 60, 100, 100))], "b": [(1, (5, 5, 45, 45))]},
            categories=[(1, "one"), (2, "two")],
        )
        dets = {
            im.id: [Detection(a.box, a.category_id, 1.0) for a in im.annotations]
            for im in ds.images
        }
        report = evaluate(dets, ds, EvalConfig.voc())
        assert report.mean_ap50 == 1.0
        assert all(v == 1.0 for v in report.per_class_ap.values())

    def test_empty_detections_zero(self):
        ds = make_dataset({"a": [(1, (0, 0, 50, 50))]}, categories=[(1, "one")])
        report = evaluate({}, ds, EvalConfig.voc())
        assert report.mean_ap50 == 0.0

    def test_unknown_category_rejected(self):
        ds = make_dataset({"a": [(1, (0, 0, 50, 50))]}, categories=[(1, "one")])
        with pytest.raises(InputError, match="unknown category"):
            evaluate({"a": [det((0, 0, 50, 50), cat=9)]}, ds)

    def test_unknown_image_rejected(self):
        ds = make_dataset({"a": [(1, (0, 0, 50, 50))]}, categories=[(1, "one")])
        with pytest.raises(InputError, match="absent from ground truth"):
            evaluate({"zz": [det((0, 0, 50, 50))]}, ds)

    def test_det_only_class_reported_as_zero_but_not_in_mean(self):
        ds = make_dataset({"a": [(1, (0, 0, 50, 50))]}, categories=[(1, "one"), (2, "two")])
        dets = {"a": [det((0, 0, 50, 50), cat=1, score=0.9), det((60, 60, 80, 80), cat=2, score=0.8)]}
        report = evaluate(dets, ds, EvalConfig.voc())
        assert report.per_class_ap[2] == 0.0
        assert report.mean_ap50 == 1.0  # class 2 has no GT, excluded from the mean

    def test_image_order_permutation_bit_identical(self, rng):
        scene, dets_by_image, ds = random_scene(rng)
        report = evaluate(dets_by_image, ds, EvalConfig.coco())
        # rebuild the dataset with images reversed and detections dict reshuffled
        from verilabel.model import Dataset

        ds_rev = Dataset(images=tuple(reversed(ds.images)), categories=ds.categories,
                         provenance=ds.provenance)
        dets_rev = dict(reversed(list(dets_by_image.items())))
        report_rev = evaluate(dets_rev, ds_rev, EvalConfig.coco())
        assert report == report_rev

    def test_duplicated_lower_score_detections_never_raise_ap(self, rng):
        scene, dets_by_image, ds = random_scene(rng)
        report = evaluate(dets_by_image, ds, EvalConfig.voc())
        doubled = {
            image_id: list(dets) + [Detection(d.box, d.category_id, d.score * 0.5) for d in dets]
            for image_id, dets in dets_by_image.items()
        }
        report2 = evaluate(doubled, ds, EvalConfig.voc())
        for cid, ap in report.per_class_ap.items():
            assert report2.per_class_ap[cid] <= ap + 1e-12

    @pytest.mark.parametrize("mode", ["voc", "coco"])
    def test_matches_brute_force_oracle(self, rng, mode):
        for _ in range(12):
            scene, dets_by_image, ds = random_scene(rng)
            cfg = EvalConfig.voc() if mode == "voc" else EvalConfig.coco()
            report = evaluate(dets_by_image, ds, cfg)
            expected = oracle_evaluate(scene, [c.id for c in ds.categories], mode)
            assert report.mean_ap50 == pytest.approx(expected["mean_ap50"], abs=1e-6)
            for cid, value in expected["per_class"].items():
                assert report.per_class_ap[cid] == pytest.approx(value, abs=1e-6)
            if mode == "coco":
                assert report.mean_ap5095 == pytest.approx(expected["mean_ap5095"], abs=1e-6)
                for thr, value in expected["ap_by_iou"].items():
                    assert report.ap_by_iou[thr] == pytest.approx(value, abs=1e-6)
                assert report.ap_small == pytest.approx(expected["ap_small"], abs=1e-6)
                assert report.ap_medium == pytest.approx(expected["ap_medium"], abs=1e-6)
                assert report.ap_large == pytest.approx(expected["ap_large"], abs=1e-6)

    def test_top100_cap_matches_oracle(self, rng):
        # one crowded image: >100 detections so the COCO per-image cap engages
        gts = [(int(rng.integers(1, 4)), (float(x), 10.0, float(x) + 20.0, 40.0))
               for x in range(0, 600, 22)]
        dets = []
        for cat, box in gts:
            for _ in range(5):
                x1, y1, x2, y2 = (c + float(rng.normal(0, 6)) for c in box)
                x1, x2 = sorted((max(0.0, x1), min(640.0, x2)))
                y1, y2 = sorted((max(0.0, y1), min(480.0, y2)))
                if x2 - x1 > 1 and y2 - y1 > 1:
                    dets.append((cat, (x1, y1, x2, y2), float(rng.uniform(0, 1))))
        assert len(dets) > 100
        scene = {"im0": {"gts": gts, "dets": dets}}
        ds = make_dataset({"im0": gts}, categories=[(c, f"c{c}") for c in (1, 2, 3)])
        dets_by_image = {
            "im0": [Detection(BBox.abs_corner(*b), c, s) for c, b, s in dets]
        }
        report = evaluate(dets_by_image, ds, EvalConfig.coco())
        expected = oracle_evaluate(scene, [1, 2, 3], "coco")
        assert report.mean_ap5095 == pytest.approx(expected["mean_ap5095"], abs=1e-6)
        assert report.mean_ap50 == pytest.approx(expected["mean_ap50"], abs=1e-6)

    def test_report_serialization(self, rng):
        scene, dets_by_image, ds = random_scene(rng)
        report = evaluate(dets_by_image, ds, EvalConfig.coco())
        doc = report.to_dict()
        assert doc["mode"] == "coco"
        assert "0.50" in doc["apByIoU"]
        table = report.render_table(ds.category_names())
        assert "mAP50" in table
