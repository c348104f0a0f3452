"""Average-precision evaluation of detections against ground truth.

Two modes are supported. VOC mode reports per-class AP at IoU 0.5 using
all-point interpolation (area under the precision envelope over recall; an
11-point variant is available for comparability with older baselines). COCO
mode reports the 101-point interpolated AP averaged over IoU thresholds
0.50:0.05:0.95, plus size-bucketed APs, keeping the top 100 detections per
image by score.

Matching is the standard greedy protocol: detections in descending score
order (ties by insertion index) claim the unmatched same-class ground truth
with the highest IoU at or above the threshold; each ground truth is matched
at most once. All reductions are deterministic and independent of image
order: global score ties break on (image id, per-image detection index).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from verilabel.errors import InputError
from verilabel.model import Annotation, BBox, BoxFormat, Dataset, ImageId, iou

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AREA_SMALL_MAX = 32.0 ** 2
AREA_MEDIUM_MAX = 96.0 ** 2
COCO_MAX_DETS = 100


@dataclass(frozen=True)
class Detection:
    box: BBox
    category_id: int
    score: float

    def __post_init__(self) -> None:
        if self.box.format is not BoxFormat.ABS_CORNER:
            raise InputError("detections must carry corner-format boxes")


class Interpolation(enum.Enum):
    ALL_POINT = "all_point"
    COCO101 = "coco101"
    VOC11 = "voc11"


class EvalMode(enum.Enum):
    VOC = "voc"
    COCO = "coco"


@dataclass(frozen=True)
class EvalConfig:
    mode: EvalMode = EvalMode.VOC
    voc_11pt: bool = False

    @classmethod
    def voc(cls, voc_11pt: bool = False) -> "EvalConfig":
        return cls(mode=EvalMode.VOC, voc_11pt=voc_11pt)

    @classmethod
    def coco(cls) -> "EvalConfig":
        return cls(mode=EvalMode.COCO)

    @property
    def interpolation(self) -> Interpolation:
        if self.mode is EvalMode.COCO:
            return Interpolation.COCO101
        return Interpolation.VOC11 if self.voc_11pt else Interpolation.ALL_POINT

    @property
    def iou_thresholds(self) -> tuple[float, ...]:
        return COCO_IOU_THRESHOLDS if self.mode is EvalMode.COCO else (0.5,)

    @property
    def max_dets_per_image(self) -> int | None:
        return COCO_MAX_DETS if self.mode is EvalMode.COCO else None


@dataclass(frozen=True)
class EvalReport:
    mode: str
    per_class_ap: dict[int, float]
    ap_by_iou: dict[float, float]
    mean_ap50: float
    mean_ap5095: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None
    pr_curves: dict[int, tuple[tuple[float, float], ...]]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "perClassAP": {str(k): v for k, v in self.per_class_ap.items()},
            "apByIoU": {f"{k:.2f}": v for k, v in self.ap_by_iou.items()},
            "meanAP50": self.mean_ap50,
            "meanAP5095": self.mean_ap5095,
            "apSmall": self.ap_small,
            "apMedium": self.ap_medium,
            "apLarge": self.ap_large,
            "prCurves": {
                str(k): [[r, p] for r, p in v] for k, v in self.pr_curves.items()
            },
        }

    def render_table(self, category_names: Mapping[int, str] | None = None) -> str:
        lines = [f"{'class':<24}{'AP':>8}"]
        for cid in sorted(self.per_class_ap):
            name = category_names.get(cid, str(cid)) if category_names else str(cid)
            lines.append(f"{name:<24}{self.per_class_ap[cid]:>8.4f}")
        lines.append(f"{'mAP50':<24}{self.mean_ap50:>8.4f}")
        if self.mean_ap5095 is not None:
            lines.append(f"{'mAP[.50:.95]':<24}{self.mean_ap5095:>8.4f}")
        for label, value in (
            ("AP small", self.ap_small),
            ("AP medium", self.ap_medium),
            ("AP large", self.ap_large),
        ):
            if value is not None:
                lines.append(f"{label:<24}{value:>8.4f}")
        return "\n".join(lines)


def match_detections(
    dets: Sequence[Detection], gts: Sequence[Annotation], iou_thresh: float
) -> list[bool]:
    """TP/FP flags for one image's detections, in descending-score order."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    matched = [False] * len(gts)
    flags: list[bool] = []
    for i in order:
        det = dets[i]
        best_j = -1
        best_iou = 0.0
        for j, gt in enumerate(gts):
            if matched[j] or gt.category_id != det.category_id:
                continue
            overlap = iou(det.box, gt.box)
            if overlap >= iou_thresh and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            matched[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(
    flags: Sequence[bool], num_gt: int, interpolation: Interpolation = Interpolation.ALL_POINT
) -> float:
    """AP from TP/FP flags given in descending-score order.

    All-point: exact area under the precision envelope as a function of
    recall. Coco101 / Voc11: mean of the envelope sampled at 101 / 11 evenly
    spaced recall points. ``num_gt == 0`` yields 0; excluding such classes
    from means is the caller's decision.
    """
    if num_gt < 0:
        raise InputError("num_gt must be non-negative")
    if num_gt == 0 or not flags:
        return 0.0
    tp = np.cumsum([1.0 if f else 0.0 for f in flags])
    fp = np.cumsum([0.0 if f else 1.0 for f in flags])
    recall = tp / num_gt
    precision = tp / (tp + fp)

    if interpolation is Interpolation.ALL_POINT:
        mrec = np.concatenate(([0.0], recall, [1.0]))
        mpre = np.concatenate(([0.0], precision, [0.0]))
        for i in range(len(mpre) - 2, -1, -1):
            mpre[i] = max(mpre[i], mpre[i + 1])
        changed = np.where(mrec[1:] != mrec[:-1])[0]
        return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))

    n_points = 101 if interpolation is Interpolation.COCO101 else 11
    grid = np.linspace(0.0, 1.0, n_points)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, grid, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


def pr_points(flags: Sequence[bool], num_gt: int) -> tuple[tuple[float, float], ...]:
    """Raw (recall, precision) samples in score order."""
    if num_gt <= 0 or not flags:
        return ()
    tp = np.cumsum([1.0 if f else 0.0 for f in flags])
    fp = np.cumsum([0.0 if f else 1.0 for f in flags])
    return tuple(zip((tp / num_gt).tolist(), (tp / (tp + fp)).tolist()))


def _cap_detections(dets: Sequence[Detection], limit: int | None) -> list[tuple[int, Detection]]:
    indexed = list(enumerate(dets))
    if limit is None or len(indexed) <= limit:
        return indexed
    ranked = sorted(indexed, key=lambda pair: (-pair[1].score, pair[0]))[:limit]
    return sorted(ranked, key=lambda pair: pair[0])


def _area(box: BBox) -> float:
    return box.area


def _class_flags(
    dets_by_image: Mapping[ImageId, list[tuple[int, Detection]]],
    gts_by_image: Mapping[ImageId, list[Annotation]],
    category_id: int,
    iou_thresh: float,
    area_range: tuple[float, float] | None,
) -> tuple[list[bool], int]:
    """Pooled score-ordered flags and GT count for one class."""
    entries: list[tuple[float, str, int, bool]] = []
    num_gt = 0
    for image_id in gts_by_image:
        gts = [g for g in gts_by_image[image_id] if g.category_id == category_id]
        dets = [(i, d) for i, d in dets_by_image.get(image_id, []) if d.category_id == category_id]
        if area_range is not None:
            lo, hi = area_range
            gts = [g for g in gts if lo <= _area(g.box) < hi]
            dets = [(i, d) for i, d in dets if lo <= _area(d.box) < hi]
        num_gt += len(gts)
        if not dets:
            continue
        # dets stay in ascending original-index order after filtering, so the
        # local sort here agrees with match_detections' internal sort.
        order = sorted(range(len(dets)), key=lambda k: (-dets[k][1].score, k))
        flags = match_detections([d for _, d in dets], gts, iou_thresh)
        for rank, k in enumerate(order):
            orig_index, det = dets[k]
            entries.append((det.score, str(image_id), orig_index, flags[rank]))
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))
    return [e[3] for e in entries], num_gt


def evaluate(
    dets_by_image: Mapping[ImageId, Sequence[Detection]],
    gt: Dataset,
    config: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Full evaluation report for detections against a ground-truth dataset."""
    known = {c.id for c in gt.categories}
    known_images = {im.id for im in gt.images}
    for image_id, dets in dets_by_image.items():
        if image_id not in known_images:
            raise InputError(f"detections reference image {image_id!r} absent from ground truth")
        for d in dets:
            if d.category_id not in known:
                raise InputError(
                    f"detection on image {image_id!r} has unknown category {d.category_id}"
                )

    gts_by_image: dict[ImageId, list[Annotation]] = {
        im.id: list(im.annotations) for im in gt.images
    }
    capped: dict[ImageId, list[tuple[int, Detection]]] = {
        image_id: _cap_detections(dets_by_image.get(image_id, ()), config.max_dets_per_image)
        for image_id in gts_by_image
    }

    class_ids = [c.id for c in gt.categories]
    gt_counts = {
        cid: sum(1 for anns in gts_by_image.values() for a in anns if a.category_id == cid)
        for cid in class_ids
    }
    det_counts = {
        cid: sum(1 for dets in capped.values() for _, d in dets if d.category_id == cid)
        for cid in class_ids
    }
    present = [cid for cid in class_ids if gt_counts[cid] > 0]
    reportable = [cid for cid in class_ids if gt_counts[cid] > 0 or det_counts[cid] > 0]

    ap: dict[tuple[int, float], float] = {}
    curves: dict[int, tuple[tuple[float, float], ...]] = {}
    for cid in reportable:
        for thr in config.iou_thresholds:
            flags, num_gt = _class_flags(capped, gts_by_image, cid, thr, None)
            ap[(cid, thr)] = average_precision(flags, num_gt, config.interpolation)
            if thr == 0.5:
                curves[cid] = pr_points(flags, num_gt)

    ap_by_iou = {
        thr: (float(np.mean([ap[(cid, thr)] for cid in present])) if present else 0.0)
        for thr in config.iou_thresholds
    }
    mean_ap50 = ap_by_iou.get(0.5, 0.0)

    if config.mode is EvalMode.COCO:
        per_class = {
            cid: float(np.mean([ap[(cid, thr)] for thr in config.iou_thresholds]))
            for cid in reportable
        }
        mean_ap5095 = float(np.mean(list(ap_by_iou.values()))) if present else 0.0
        buckets = {}
        for label, area_range in (
            ("small", (0.0, AREA_SMALL_MAX)),
            ("medium", (AREA_SMALL_MAX, AREA_MEDIUM_MAX)),
            ("large", (AREA_MEDIUM_MAX, float("inf"))),
        ):
            values = []
            for cid in class_ids:
                per_thr = []
                bucket_gt = 0
                for thr in config.iou_thresholds:
                    flags, num_gt = _class_flags(capped, gts_by_image, cid, thr, area_range)
                    bucket_gt = num_gt
                    per_thr.append(average_precision(flags, num_gt, config.interpolation))
                if bucket_gt > 0:
                    values.append(float(np.mean(per_thr)))
            buckets[label] = float(np.mean(values)) if values else 0.0
        return EvalReport(
            mode="coco",
            per_class_ap=per_class,
            ap_by_iou=ap_by_iou,
            mean_ap50=mean_ap50,
            mean_ap5095=mean_ap5095,
            ap_small=buckets["small"],
            ap_medium=buckets["medium"],
            ap_large=buckets["large"],
            pr_curves=curves,
        )

    per_class = {cid: ap[(cid, 0.5)] for cid in reportable}
    return EvalReport(
        mode="voc",
        per_class_ap=per_class,
        ap_by_iou=ap_by_iou,
        mean_ap50=mean_ap50,
        mean_ap5095=None,
        ap_small=None,
        ap_medium=None,
        ap_large=None,
        pr_curves=curves,
    )
