"""Deterministic toy worlds and a synthetic degrading detector.

These make the whole pipeline runnable end to end with no neural model. The
detector's error model captures the failure mode pseudo-labeling suffers
from: the longer a class has been carried forward through incremental
handoffs (its "staleness"), the more of its objects are missed and the more
wrong-class boxes are hallucinated.

Worlds are generated with integer pixel coordinates on a power-of-two canvas
so that normalized-center round trips are bit-exact; the noiseless detector
therefore reproduces ground truth boxes exactly, which the full-recovery
tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from verilabel.errors import InputError
from verilabel.model import (
    Annotation,
    BBox,
    BoxFormat,
    Category,
    Dataset,
    ImageRecord,
    convert_box,
    iou,
)
from verilabel.pseudo import DetectionOutput
from verilabel.rng import rng_for

_MAX_PLACEMENT_ATTEMPTS = 200
_PLACEMENT_MAX_IOU = 0.3


@dataclass(frozen=True)
class SynthWorldConfig:
    """World size plus the detector error model.

    The error model defaults are instrument calibrations chosen so that an
    unfiltered pseudo-labeling run degrades measurably over four tasks at
    desk scale; they carry no meaning beyond that.
    """

    num_classes: int = 20
    images_per_task: int = 12
    objects_per_image: int = 4
    image_size: tuple[int, int] = (512, 512)
    seed: int = 0
    recall_decay: float = 0.15       # per handoff, miss probability factor
    hallucination_rate: float = 0.10  # per stale class, per handoff
    box_jitter: float = 4.0           # px std-dev on corner coordinates
    score_noise: float = 0.05

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise InputError("num_classes must be >= 1")
        if self.images_per_task < 1:
            raise InputError("images_per_task must be >= 1")
        if self.objects_per_image < 1:
            raise InputError("objects_per_image must be >= 1; images must have annotations")
        w, h = self.image_size
        if w < 64 or h < 64:
            raise InputError("image_size must be at least 64x64")
        if not 0.0 <= self.recall_decay <= 1.0:
            raise InputError("recall_decay must lie in [0, 1]")
        if not 0.0 <= self.hallucination_rate < 1.0:
            raise InputError("hallucination_rate must lie in [0, 1)")
        if self.box_jitter < 0.0 or self.score_noise < 0.0:
            raise InputError("noise magnitudes must be non-negative")


def synth_categories(num_classes: int) -> tuple[Category, ...]:
    return tuple(Category(i + 1, f"class{i + 1:02d}") for i in range(num_classes))


def _place_boxes(rng: np.random.Generator, cfg: SynthWorldConfig) -> list[BBox]:
    w, h = cfg.image_size
    placed: list[BBox] = []
    for _ in range(cfg.objects_per_image):
        for attempt in range(_MAX_PLACEMENT_ATTEMPTS + 1):
            if attempt == _MAX_PLACEMENT_ATTEMPTS:
                raise InputError(
                    f"infeasible packing: {cfg.objects_per_image} boxes do not fit "
                    f"in {w}x{h} after {_MAX_PLACEMENT_ATTEMPTS} attempts"
                )
            side_w = int(rng.integers(24, min(145, w // 2)))
            side_h = int(rng.integers(24, min(145, h // 2)))
            x1 = int(rng.integers(0, w - side_w + 1))
            y1 = int(rng.integers(0, h - side_h + 1))
            box = BBox.abs_corner(x1, y1, x1 + side_w, y1 + side_h)
            if all(iou(box, other) < _PLACEMENT_MAX_IOU for other in placed):
                placed.append(box)
                break
    return placed


def generate_world(cfg: SynthWorldConfig, num_tasks: int = 1) -> Dataset:
    """Seed-reproducible dataset of ``images_per_task * num_tasks`` images."""
    if num_tasks < 1:
        raise InputError("num_tasks must be >= 1")
    categories = synth_categories(cfg.num_classes)
    names = {c.id: c.name for c in categories}
    images = []
    for i in range(cfg.images_per_task * num_tasks):
        image_id = f"synth-{i:04d}"
        rng = rng_for(cfg.seed, "world", i)
        boxes = _place_boxes(rng, cfg)
        annotations = tuple(
            Annotation(
                category_id=(cid := int(rng.integers(1, cfg.num_classes + 1))),
                category_name=names[cid],
                box=box,
                source_image_id=image_id,
            )
            for box in boxes
        )
        images.append(
            ImageRecord(
                id=image_id,
                file_path=f"synthetic://{image_id}.png",
                width=cfg.image_size[0],
                height=cfg.image_size[1],
                annotations=annotations,
            )
        )
    return Dataset(images=tuple(images), categories=categories, provenance="synthetic")


@dataclass(frozen=True)
class SyntheticDetector:
    """Stand-in detector knowing the categories learned up to some task."""

    known_category_ids: tuple[int, ...]
    trained_at_task: int
    config: SynthWorldConfig

    def __post_init__(self) -> None:
        if not self.known_category_ids:
            raise InputError("detector must know at least one category")
        object.__setattr__(
            self, "known_category_ids", tuple(int(c) for c in self.known_category_ids)
        )


def _jitter_corner_box(
    rng: np.random.Generator, box: BBox, sigma: float, w: int, h: int
) -> BBox:
    if sigma <= 0.0:
        return box
    x1, y1, x2, y2 = (c + rng.normal(0.0, sigma) for c in box.coords)
    x1, x2 = sorted((x1, x2))
    y1, y2 = sorted((y1, y2))
    x1 = min(max(x1, 0.0), w - 1.0)
    y1 = min(max(y1, 0.0), h - 1.0)
    x2 = min(max(x2, x1 + 1.0), float(w))
    y2 = min(max(y2, y1 + 1.0), float(h))
    return BBox.abs_corner(x1, y1, x2, y2)


def synthetic_detect(
    det: SyntheticDetector, image: ImageRecord, staleness: int
) -> DetectionOutput:
    """Detector output for one image under the staleness error model.

    Each true object of a known class is emitted with probability
    (1 - recall_decay)^staleness, its box jittered and its score drawn high
    minus a staleness penalty. Each known class additionally hallucinates a
    wrong-class box with probability hallucination_rate * staleness. The
    remaining rows are background-dominant filler. Deterministic per
    (seed, image id, staleness).
    """
    if staleness < 0:
        raise InputError("staleness must be >= 0")
    cfg = det.config
    rng = rng_for(cfg.seed, "detect", image.id, det.trained_at_task, staleness)
    w, h = image.width, image.height
    known = set(det.known_category_ids)
    col = {cid: j for j, cid in enumerate(det.known_category_ids)}
    n_cols = len(det.known_category_ids) + 1

    emit_prob = (1.0 - cfg.recall_decay) ** staleness
    penalty = min(0.2, 0.04 * staleness)

    rows: list[np.ndarray] = []
    boxes: list[BBox] = []

    def score_row(target: int, target_score: float) -> np.ndarray:
        row = np.zeros(n_cols)
        if cfg.score_noise > 0.0:
            row[:-1] = rng.uniform(0.0, min(cfg.score_noise, 0.25), size=n_cols - 1)
        row[target] = target_score
        row[-1] = 1.0 - target_score
        return row

    for ann in image.annotations:
        if ann.category_id not in known:
            continue
        if rng.random() >= emit_prob:
            continue
        box = _jitter_corner_box(rng, ann.box, cfg.box_jitter, w, h)
        score = rng.uniform(0.6, 0.95) - penalty
        if cfg.score_noise > 0.0:
            score += rng.normal(0.0, cfg.score_noise)
        score = float(min(max(score, 0.35), 0.98))
        rows.append(score_row(col[ann.category_id], score))
        boxes.append(box)

    if staleness > 0:
        halluc_prob = min(cfg.hallucination_rate * staleness, 0.95)
        for cid in det.known_category_ids:
            if rng.random() >= halluc_prob:
                continue
            victims = [a for a in image.annotations if a.category_id != cid]
            if victims:
                target = victims[int(rng.integers(0, len(victims)))]
                box = _jitter_corner_box(rng, target.box, max(cfg.box_jitter, 2.0), w, h)
            else:
                side = int(rng.integers(32, 96))
                x1 = int(rng.integers(0, w - side))
                y1 = int(rng.integers(0, h - side))
                box = BBox.abs_corner(x1, y1, x1 + side, y1 + side)
            score = float(rng.uniform(0.35, 0.6))
            rows.append(score_row(col[cid], score))
            boxes.append(box)

    for _ in range(3):  # background filler keeps Q >= 1 even on empty emissions
        row = np.zeros(n_cols)
        row[:-1] = rng.uniform(0.0, 0.05, size=n_cols - 1)
        row[-1] = rng.uniform(0.7, 0.95)
        rows.append(row)
        boxes.append(BBox.abs_corner(w * 0.25, h * 0.25, w * 0.75, h * 0.75))

    norm = [convert_box(b, BoxFormat.NORM_CENTER, w, h).coords for b in boxes]
    return DetectionOutput(
        image_id=image.id,
        scores=np.vstack(rows),
        boxes=np.asarray(norm, dtype=np.float64),
        category_ids=det.known_category_ids,
    )


def known_ids_for_task(
    categories: Iterable[Category], cumulative_ids: frozenset[int]
) -> tuple[int, ...]:
    """Known-category column order: the dataset table order, filtered."""
    return tuple(c.id for c in categories if c.id in cumulative_ids)
