"""Stub backend: answers verification queries from a ground-truth file.

The stub loads a COCO-style annotation document and answers a /verify
request with "yes" iff some ground-truth object of the category named in the
prompt overlaps the requested box with IoU >= the threshold. /detect echoes
an idealized detector output built from the same ground truth. Responses are
a pure function of (ground-truth file, request).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

# The prompt template is part of the wire contract; the object name sits in a
# fixed clause the conformance suite pins down.
_NAME_RE = re.compile(r"classify it as a (?P<name>.+?) category without any doubt")

Box = tuple[float, float, float, float]


@dataclass(frozen=True)
class StubImage:
    image_id: int | str
    width: int
    height: int
    objects: tuple[tuple[int, str, Box], ...]  # (category id, name, corner box)


@dataclass(frozen=True)
class StubGroundTruth:
    categories: tuple[tuple[int, str], ...]
    images: dict[str, StubImage]  # keyed by str(image id)


def load_ground_truth(path: str | Path) -> StubGroundTruth:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RuntimeError(f"cannot load ground truth {path}: {exc}") from exc
    try:
        categories = tuple((int(c["id"]), str(c["name"])) for c in doc["categories"])
        names = dict(categories)
        images: dict[str, StubImage] = {}
        collected: dict[str, list[tuple[int, str, Box]]] = {}
        meta: dict[str, tuple[int | str, int, int]] = {}
        for img in doc["images"]:
            key = str(img["id"])
            meta[key] = (img["id"], int(img["width"]), int(img["height"]))
            collected[key] = []
        for ann in doc["annotations"]:
            key = str(ann["image_id"])
            x, y, w, h = (float(v) for v in ann["bbox"])
            cid = int(ann["category_id"])
            collected[key].append((cid, names[cid], (x, y, x + w, y + h)))
        for key, (image_id, width, height) in meta.items():
            images[key] = StubImage(image_id, width, height, tuple(collected[key]))
    except (KeyError, TypeError, ValueError) as exc:
        raise RuntimeError(f"ground truth {path} is not COCO-style: {exc}") from exc
    return StubGroundTruth(categories=categories, images=images)


def box_iou(a: Box, b: Box) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def name_from_prompt(prompt: str) -> str | None:
    m = _NAME_RE.search(prompt)
    return m.group("name") if m else None


def verify_answer(gt: StubGroundTruth, image_key: str, box: Box, name: str, iou_thresh: float) -> str:
    image = gt.images[image_key]
    hit = any(
        obj_name == name and box_iou(box, obj_box) >= iou_thresh
        for _cid, obj_name, obj_box in image.objects
    )
    return "yes" if hit else "no"


def detection_document(gt: StubGroundTruth, image_key: str) -> dict:
    """Idealized detector output: one confident row per ground-truth object
    plus one background filler row, boxes in normalized center form."""
    image = gt.images[image_key]
    col = {cid: i for i, (cid, _name) in enumerate(gt.categories)}
    n_cols = len(gt.categories) + 1
    scores: list[list[float]] = []
    boxes: list[list[float]] = []
    for cid, _name, (x1, y1, x2, y2) in image.objects:
        row = [0.05] * n_cols
        row[col[cid]] = 0.9
        row[-1] = 0.1
        scores.append(row)
        boxes.append(
            [
                (x1 + x2) / 2.0 / image.width,
                (y1 + y2) / 2.0 / image.height,
                (x2 - x1) / image.width,
                (y2 - y1) / image.height,
            ]
        )
    background = [0.01] * n_cols
    background[-1] = 0.95
    scores.append(background)
    boxes.append([0.5, 0.5, 0.5, 0.5])
    return {
        "imageId": image.image_id,
        "categoryIds": [cid for cid, _name in gt.categories],
        "scoresAreLogits": False,
        "scores": scores,
        "boxes": boxes,
    }
