from __future__ import annotations

import json

import numpy as np
import pytest

from verilabel.metrics import Detection
from verilabel.model import Annotation, BBox, Category, Dataset, ImageRecord


def coco_doc(
    images: list[dict] | None = None,
    annotations: list[dict] | None = None,
    categories: list[dict] | None = None,
) -> bytes:
    doc = {
        "images": images if images is not None else [
            {"id": 1, "file_name": "a.jpg", "width": 640, "height": 480}
        ],
        "annotations": annotations if annotations is not None else [],
        "categories": categories if categories is not None else [
            {"id": 3, "name": "cat"},
            {"id": 7, "name": "dog"},
        ],
    }
    return json.dumps(doc).encode("utf-8")


def voc_doc(
    objects: list[tuple[str, float, float, float, float]],
    filename: str = "img0001.jpg",
    width: int = 640,
    height: int = 480,
    include_size: bool = True,
) -> bytes:
    parts = ["<annotation>", f"<filename>{filename}</filename>"]
    if include_size:
        parts.append(
            f"<size><width>{width}</width><height>{height}</height><depth>3</depth></size>"
        )
    for name, xmin, ymin, xmax, ymax in objects:
        parts.append(
            "<object>"
            f"<name>{name}</name>"
            "<bndbox>"
            f"<xmin>{xmin}</xmin><ymin>{ymin}</ymin><xmax>{xmax}</xmax><ymax>{ymax}</ymax>"
            "</bndbox>"
            "</object>"
        )
    parts.append("</annotation>")
    return "".join(parts).encode("utf-8")


def make_dataset(
    spec: dict[int | str, list[tuple[int, tuple[float, float, float, float]]]],
    categories: list[tuple[int, str]],
    size: tuple[int, int] = (640, 480),
) -> Dataset:
    """spec: image_id -> [(category_id, corner_box)]."""
    names = dict(categories)
    images = []
    for image_id, anns in spec.items():
        annotations = tuple(
            Annotation(cid, names[cid], BBox.abs_corner(*box), image_id) for cid, box in anns
        )
        images.append(
            ImageRecord(
                id=image_id,
                file_path=f"{image_id}.jpg",
                width=size[0],
                height=size[1],
                annotations=annotations,
            )
        )
    return Dataset(
        images=tuple(images),
        categories=tuple(Category(cid, name) for cid, name in categories),
        provenance="test",
    )


def random_scene(
    rng: np.random.Generator,
    max_images: int = 10,
    max_boxes: int = 20,
    num_classes: int = 4,
    canvas: int = 300,
):
    """Random GTs plus detections (some near-copies of GTs, some noise).

    Returns (scene dict for the oracle, dets_by_image, gt Dataset inputs).
    """
    n_images = int(rng.integers(1, max_images + 1))
    total_boxes = int(rng.integers(1, max_boxes + 1))
    scene: dict = {}
    for i in range(n_images):
        scene[f"im{i}"] = {"gts": [], "dets": []}
    image_ids = list(scene)

    def random_box(min_side=6, max_side=140):
        w = float(rng.uniform(min_side, max_side))
        h = float(rng.uniform(min_side, max_side))
        x1 = float(rng.uniform(0, canvas - w))
        y1 = float(rng.uniform(0, canvas - h))
        return (x1, y1, x1 + w, y1 + h)

    for _ in range(total_boxes):
        image_id = image_ids[int(rng.integers(0, n_images))]
        cat = int(rng.integers(1, num_classes + 1))
        scene[image_id]["gts"].append((cat, random_box()))

    for image_id in image_ids:
        for cat, box in scene[image_id]["gts"]:
            # jittered copy: sometimes a good match, sometimes poor
            if rng.random() < 0.85:
                sigma = float(rng.uniform(0.0, 25.0))
                x1, y1, x2, y2 = (c + float(rng.normal(0, sigma)) for c in box)
                x1, x2 = sorted((max(0.0, x1), min(float(canvas), x2)))
                y1, y2 = sorted((max(0.0, y1), min(float(canvas), y2)))
                if x2 - x1 > 1 and y2 - y1 > 1:
                    det_cat = cat if rng.random() < 0.9 else int(rng.integers(1, num_classes + 1))
                    scene[image_id]["dets"].append(
                        (det_cat, (x1, y1, x2, y2), float(rng.uniform(0.05, 1.0)))
                    )
        for _ in range(int(rng.integers(0, 4))):
            scene[image_id]["dets"].append(
                (int(rng.integers(1, num_classes + 1)), random_box(), float(rng.uniform(0.05, 1.0)))
            )

    categories = [(c, f"c{c}") for c in range(1, num_classes + 1)]
    gt_spec = {image_id: scene[image_id]["gts"] for image_id in image_ids}
    ds = make_dataset(gt_spec, categories, size=(canvas, canvas))
    dets_by_image = {
        image_id: [
            Detection(BBox.abs_corner(*box), cat, score)
            for cat, box, score in scene[image_id]["dets"]
        ]
        for image_id in image_ids
    }
    return scene, dets_by_image, ds


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
