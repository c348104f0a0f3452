"""Geometric and dataset primitives shared by every pipeline stage.

A box always carries an explicit format tag so nothing downstream has to
guess whether four floats mean normalized centers or pixel corners.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from verilabel.errors import InputError

ImageId = int | str

# Conversion overshoot below this many pixels is float noise and is clamped;
# anything larger is treated as corrupt input when a caller opts in to the
# strict rule (parsers do, detector-output conversion does not).
CLAMP_SLACK_PX = 0.5


class BoxFormat(enum.Enum):
    """How the four coordinates of a :class:`BBox` are read."""

    NORM_CENTER = "norm_center"  # (cx, cy, w, h), each in [0, 1]
    ABS_CORNER = "abs_corner"    # (x1, y1, x2, y2) in pixels


@dataclass(frozen=True)
class BBox:
    """A rectangle tagged with its coordinate convention.

    ``a, b, c, d`` read as (cx, cy, w, h) for NORM_CENTER and as
    (x1, y1, x2, y2) for ABS_CORNER.
    """

    format: BoxFormat
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.format is BoxFormat.NORM_CENTER:
            if not all(0.0 <= v <= 1.0 for v in self.coords):
                raise InputError(f"normalized box coordinates outside [0, 1]: {self.coords}")
            if self.c <= 0.0 or self.d <= 0.0:
                raise InputError(f"normalized box has non-positive size: {self.coords}")
        else:
            if self.a >= self.c or self.b >= self.d:
                raise InputError(f"corner box is degenerate: {self.coords}")
            if min(self.coords) < 0.0:
                raise InputError(f"corner box has negative coordinates: {self.coords}")

    @classmethod
    def norm_center(cls, cx: float, cy: float, w: float, h: float) -> BBox:
        return cls(BoxFormat.NORM_CENTER, cx, cy, w, h)

    @classmethod
    def abs_corner(cls, x1: float, y1: float, x2: float, y2: float) -> BBox:
        return cls(BoxFormat.ABS_CORNER, x1, y1, x2, y2)

    @property
    def coords(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    @property
    def width(self) -> float:
        if self.format is not BoxFormat.ABS_CORNER:
            raise InputError("width is defined for corner boxes only")
        return self.c - self.a

    @property
    def height(self) -> float:
        if self.format is not BoxFormat.ABS_CORNER:
            raise InputError("height is defined for corner boxes only")
        return self.d - self.b

    @property
    def area(self) -> float:
        return self.width * self.height


def _clamp(value: float, low: float, high: float, max_overshoot: float | None) -> float:
    if max_overshoot is not None and (value < low - max_overshoot or value > high + max_overshoot):
        raise InputError(
            f"coordinate {value!r} overshoots [{low}, {high}] by more than {max_overshoot}px"
        )
    return min(max(value, low), high)


def convert_box(
    box: BBox,
    target: BoxFormat,
    image_w: int,
    image_h: int,
    *,
    max_overshoot_px: float | None = None,
) -> BBox:
    """Convert ``box`` to ``target`` format for an image of the given size.

    Corner results are clamped into [0, W] x [0, H]. When ``max_overshoot_px``
    is set, clamping beyond that slack raises instead (the strict parser rule).
    """
    if image_w <= 0 or image_h <= 0:
        raise InputError(f"image dimensions must be positive, got {image_w}x{image_h}")
    if box.format is target:
        return box
    if box.format is BoxFormat.NORM_CENTER:
        cx, cy, w, h = box.coords
        x1 = (cx - w / 2.0) * image_w
        y1 = (cy - h / 2.0) * image_h
        x2 = (cx + w / 2.0) * image_w
        y2 = (cy + h / 2.0) * image_h
        return BBox.abs_corner(
            _clamp(x1, 0.0, image_w, max_overshoot_px),
            _clamp(y1, 0.0, image_h, max_overshoot_px),
            _clamp(x2, 0.0, image_w, max_overshoot_px),
            _clamp(y2, 0.0, image_h, max_overshoot_px),
        )
    x1, y1, x2, y2 = box.coords
    cx = (x1 + x2) / 2.0 / image_w
    cy = (y1 + y2) / 2.0 / image_h
    w = (x2 - x1) / image_w
    h = (y2 - y1) / image_h
    clip = lambda v: min(max(v, 0.0), 1.0)  # noqa: E731 - numerical safety only
    return BBox.norm_center(clip(cx), clip(cy), clip(w), clip(h))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two corner-format boxes; 0 for empty union."""
    if a.format is not BoxFormat.ABS_CORNER or b.format is not BoxFormat.ABS_CORNER:
        raise InputError("iou expects corner-format boxes")
    ix1 = max(a.a, b.a)
    iy1 = max(a.b, b.b)
    ix2 = min(a.c, b.c)
    iy2 = min(a.d, b.d)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class Annotation:
    """One labeled object instance on an image.

    ``iscrowd`` is carried through unchanged for file compatibility; nothing
    in this package interprets it.
    """

    category_id: int
    category_name: str
    box: BBox
    source_image_id: ImageId
    iscrowd: int = 0


@dataclass(frozen=True)
class ImageRecord:
    id: ImageId
    file_path: str
    width: int
    height: int
    annotations: tuple[Annotation, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"image {self.id!r} has non-positive dimensions")
        for ann in self.annotations:
            if ann.source_image_id != self.id:
                raise InputError(
                    f"annotation on image {self.id!r} claims source {ann.source_image_id!r}"
                )
            corner = convert_box(ann.box, BoxFormat.ABS_CORNER, self.width, self.height)
            if corner.a < 0 or corner.b < 0 or corner.c > self.width or corner.d > self.height:
                raise InputError(
                    f"annotation box {corner.coords} exceeds image {self.id!r} "
                    f"bounds {self.width}x{self.height}"
                )


@dataclass(frozen=True)
class Dataset:
    """A set of images plus the category table they are annotated against."""

    images: tuple[ImageRecord, ...]
    categories: tuple[Category, ...]
    provenance: str = "unknown"

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "categories", tuple(self.categories))
        cat_ids = [c.id for c in self.categories]
        if len(set(cat_ids)) != len(cat_ids):
            raise InputError("category ids are not unique")
        img_ids = [im.id for im in self.images]
        if len(set(img_ids)) != len(img_ids):
            raise InputError("image ids are not unique")
        names = {c.id: c.name for c in self.categories}
        for im in self.images:
            for ann in im.annotations:
                if ann.category_id not in names:
                    raise InputError(
                        f"annotation on image {im.id!r} references unknown "
                        f"category {ann.category_id}"
                    )
                if ann.category_name != names[ann.category_id]:
                    raise InputError(
                        f"annotation on image {im.id!r} names category "
                        f"{ann.category_name!r} but the table says "
                        f"{names[ann.category_id]!r}"
                    )

    def category_names(self) -> dict[int, str]:
        return {c.id: c.name for c in self.categories}

    def images_by_id(self) -> dict[ImageId, ImageRecord]:
        return {im.id: im for im in self.images}

    def annotation_count(self) -> int:
        return sum(len(im.annotations) for im in self.images)

    def all_annotations(self) -> list[Annotation]:
        return [ann for im in self.images for ann in im.annotations]
