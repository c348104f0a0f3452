"""Readers and writers for the two supported annotation formats.

COCO-style JSON documents carry ``images`` / ``annotations`` / ``categories``
arrays with boxes as absolute ``[x, y, w, h]`` (top-left form). VOC-style XML
is one document per image with 1-based inclusive corner coordinates. Either
way, everything is normalized into :class:`~verilabel.model.Dataset` with
corner-format boxes, and nothing is dropped silently: a bad entity fails the
parse with an error naming it.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from typing import Iterable, Sequence

from verilabel.errors import InputError
from verilabel.model import (
    CLAMP_SLACK_PX,
    Annotation,
    BBox,
    BoxFormat,
    Category,
    Dataset,
    ImageRecord,
    convert_box,
)

VOC_CLASS_NAMES = (
    "aeroplane", "bicycle", "bird", "boat", "bottle",
    "bus", "car", "cat", "chair", "cow",
    "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)

VOC_CATEGORIES = tuple(Category(i + 1, name) for i, name in enumerate(VOC_CLASS_NAMES))


def _as_text(data: bytes | str) -> str:
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _clamped_corner(
    x1: float, y1: float, x2: float, y2: float, width: int, height: int, context: str
) -> BBox:
    clamp = lambda v, hi: min(max(v, 0.0), float(hi))  # noqa: E731
    for value, hi in ((x1, width), (x2, width), (y1, height), (y2, height)):
        if value < -CLAMP_SLACK_PX or value > hi + CLAMP_SLACK_PX:
            raise InputError(f"{context}: box coordinate {value} outside image bounds by >= 0.5px")
    return BBox.abs_corner(clamp(x1, width), clamp(y1, height), clamp(x2, width), clamp(y2, height))


def parse_coco(data: bytes | str) -> Dataset:
    """Parse a COCO-style annotation document into a Dataset."""
    try:
        doc = json.loads(_as_text(data))
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed COCO document: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("malformed COCO document: top level is not an object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise InputError(f"malformed COCO document: missing or non-array {key!r}")

    categories: list[Category] = []
    for i, cat in enumerate(doc["categories"]):
        try:
            categories.append(Category(int(cat["id"]), str(cat["name"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"categories[{i}] is malformed: {exc}") from exc
    names = {c.id: c.name for c in categories}

    dims: dict[int | str, tuple[int, int, str]] = {}
    order: list[int | str] = []
    for i, img in enumerate(doc["images"]):
        try:
            image_id = img["id"]
            width = int(img["width"])
            height = int(img["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"images[{i}] is malformed: {exc}") from exc
        if image_id in dims:
            raise InputError(f"duplicate image id {image_id!r}")
        dims[image_id] = (width, height, str(img.get("file_name", "")))
        order.append(image_id)

    per_image: dict[int | str, list[Annotation]] = {image_id: [] for image_id in order}
    for i, ann in enumerate(doc["annotations"]):
        image_id = ann.get("image_id")
        if image_id not in dims:
            raise InputError(f"annotations[{i}] references unknown image {image_id!r}")
        cat_id = ann.get("category_id")
        if cat_id not in names:
            raise InputError(
                f"annotations[{i}] on image {image_id!r} references unknown category {cat_id!r}"
            )
        bbox = ann.get("bbox")
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise InputError(f"annotations[{i}] on image {image_id!r} has no [x, y, w, h] bbox")
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            raise InputError(
                f"annotations[{i}] on image {image_id!r} has a degenerate box (w={w}, h={h})"
            )
        width, height, _ = dims[image_id]
        box = _clamped_corner(
            x, y, x + w, y + h, width, height, f"annotations[{i}] on image {image_id!r}"
        )
        per_image[image_id].append(
            Annotation(
                int(cat_id),
                names[int(cat_id)],
                box,
                image_id,
                iscrowd=int(ann.get("iscrowd", 0) or 0),
            )
        )

    images = tuple(
        ImageRecord(
            id=image_id,
            file_path=dims[image_id][2],
            width=dims[image_id][0],
            height=dims[image_id][1],
            annotations=tuple(per_image[image_id]),
        )
        for image_id in order
    )
    return Dataset(images=images, categories=tuple(categories), provenance="coco")


def serialize_coco(ds: Dataset) -> bytes:
    """Write a Dataset as COCO-style JSON (deterministic byte output)."""
    images = [
        {"id": im.id, "file_name": im.file_path, "width": im.width, "height": im.height}
        for im in ds.images
    ]
    annotations = []
    ann_id = 0
    for im in ds.images:
        for ann in im.annotations:
            corner = convert_box(ann.box, BoxFormat.ABS_CORNER, im.width, im.height)
            x1, y1, x2, y2 = corner.coords
            ann_id += 1
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": im.id,
                    "category_id": ann.category_id,
                    "bbox": [x1, y1, x2 - x1, y2 - y1],
                    "area": (x2 - x1) * (y2 - y1),
                    "iscrowd": ann.iscrowd,
                }
            )
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
    }
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def parse_voc_xml(
    docs: Iterable[bytes | str],
    category_table: Sequence[Category] | Sequence[tuple[int, str]] = VOC_CATEGORIES,
) -> Dataset:
    """Parse per-image VOC-style XML documents into one Dataset.

    VOC coordinates are 1-based inclusive; they become 0-based corners via
    (xmin - 1, ymin - 1, xmax, ymax).
    """
    categories = tuple(
        c if isinstance(c, Category) else Category(int(c[0]), str(c[1])) for c in category_table
    )
    by_name = {c.name: c for c in categories}

    records: list[ImageRecord] = []
    for i, raw in enumerate(docs):
        try:
            root = ET.fromstring(_as_text(raw))
        except ET.ParseError as exc:
            raise InputError(f"document {i}: malformed XML: {exc}") from exc
        filename = (root.findtext("filename") or "").strip()
        image_id = filename.rsplit(".", 1)[0] if filename else f"image_{i:04d}"
        size = root.find("size")
        if size is None:
            raise InputError(f"document {i} ({image_id}): missing <size> element")
        try:
            width = int(float(size.findtext("width")))
            height = int(float(size.findtext("height")))
        except (TypeError, ValueError) as exc:
            raise InputError(f"document {i} ({image_id}): bad <size>: {exc}") from exc

        annotations: list[Annotation] = []
        for j, obj in enumerate(root.findall("object")):
            name = (obj.findtext("name") or "").strip()
            if name not in by_name:
                raise InputError(
                    f"document {i} ({image_id}): object[{j}] name {name!r} not in category table"
                )
            bnd = obj.find("bndbox")
            if bnd is None:
                raise InputError(f"document {i} ({image_id}): object[{j}] missing <bndbox>")
            try:
                xmin = float(bnd.findtext("xmin"))
                ymin = float(bnd.findtext("ymin"))
                xmax = float(bnd.findtext("xmax"))
                ymax = float(bnd.findtext("ymax"))
            except (TypeError, ValueError) as exc:
                raise InputError(f"document {i} ({image_id}): object[{j}] bad bndbox: {exc}") from exc
            x1, y1, x2, y2 = xmin - 1.0, ymin - 1.0, xmax, ymax
            if x2 <= x1 or y2 <= y1:
                raise InputError(
                    f"document {i} ({image_id}): object[{j}] box is degenerate after conversion"
                )
            cat = by_name[name]
            box = _clamped_corner(x1, y1, x2, y2, width, height, f"document {i} object[{j}]")
            annotations.append(Annotation(cat.id, cat.name, box, image_id))

        records.append(
            ImageRecord(
                id=image_id,
                file_path=filename,
                width=width,
                height=height,
                annotations=tuple(annotations),
            )
        )
    return Dataset(images=tuple(records), categories=categories, provenance="voc")
