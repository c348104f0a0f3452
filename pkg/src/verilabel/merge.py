"""Combine accepted pseudo GTs with the current task's real annotations.

Real ground truth is never touched: pseudo labels are appended per image,
optionally after per-class greedy NMS among the pseudo labels themselves.
Category disjointness between old (pseudo) and new (real) classes is a hard
requirement; overlap means the scenario slicing went wrong upstream.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping, Sequence

from verilabel.errors import InputError
from verilabel.model import Dataset, ImageId, iou  # noqa: F401  (iou is part of this module's API)
from verilabel.pseudo import PseudoGT, Verification
from verilabel.scenario import TaskView


def nms_pseudo(pgs: Sequence[PseudoGT], nms_iou: float) -> list[PseudoGT]:
    """Per-class greedy suppression: keep highest confidence, drop same-class
    boxes overlapping a kept one with IoU >= ``nms_iou``. Ties break toward
    the lower query index."""
    kept: list[PseudoGT] = []
    for p in sorted(pgs, key=lambda p: (-p.confidence, p.query_index)):
        suppressed = any(
            k.annotation.category_id == p.annotation.category_id
            and iou(k.annotation.box, p.annotation.box) >= nms_iou
            for k in kept
        )
        if not suppressed:
            kept.append(p)
    return kept


def merge_labels(
    real_view: TaskView,
    accepted: Mapping[ImageId, Sequence[PseudoGT]],
    nms_iou: float | None = None,
) -> Dataset:
    """Per-image union of the task view's real GTs and accepted pseudo GTs."""
    image_ids = {im.id for im in real_view.dataset.images}
    for image_id, pgs in accepted.items():
        if image_id not in image_ids:
            raise InputError(f"accepted pseudo GTs reference image {image_id!r} not in the view")
        for p in pgs:
            if p.verification is not Verification.ACCEPTED:
                raise InputError(
                    f"pseudo GT on image {image_id!r} query {p.query_index} is "
                    f"{p.verification.value}, not accepted"
                )
            if p.annotation.category_id in real_view.visible_categories:
                raise InputError(
                    f"pseudo GT on image {image_id!r} carries current-task category "
                    f"{p.annotation.category_id}; old and new classes must be disjoint"
                )

    images = []
    for im in real_view.dataset.images:
        pgs = list(accepted.get(im.id, ()))
        if nms_iou is not None:
            pgs = nms_pseudo(pgs, nms_iou)
        extra = tuple(p.annotation for p in pgs)
        images.append(replace(im, annotations=im.annotations + extra))
    return Dataset(
        images=tuple(images),
        categories=real_view.dataset.categories,
        provenance="merged",
    )
