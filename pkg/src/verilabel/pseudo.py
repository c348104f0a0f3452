"""Pseudo ground-truth extraction from raw detector outputs.

A detector output is a per-image pair of matrices: a Q x (C+1) score matrix
whose last column is the background class, and a Q x 4 matrix of boxes in
normalized center form. For each query row, the highest-scoring foreground
class becomes a pseudo ground truth iff its score clears the confidence
threshold; the background column never produces one.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from verilabel.errors import InputError
from verilabel.model import Annotation, BBox, BoxFormat, ImageId, convert_box

DEFAULT_TAU = 0.3


class Verification(enum.Enum):
    UNVERIFIED = "unverified"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class DetectionOutput:
    """Raw per-image detector output (scores as probabilities in [0, 1])."""

    image_id: ImageId
    scores: np.ndarray
    boxes: np.ndarray
    category_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        boxes = np.asarray(self.boxes, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "category_ids", tuple(int(c) for c in self.category_ids))
        if scores.ndim != 2 or scores.shape[0] < 1:
            raise InputError(f"scores must be a Q x (C+1) matrix with Q >= 1, got {scores.shape}")
        if scores.shape[1] != len(self.category_ids) + 1:
            raise InputError(
                f"scores have {scores.shape[1]} columns but {len(self.category_ids)} "
                "categories are declared (expected C+1)"
            )
        if boxes.shape != (scores.shape[0], 4):
            raise InputError(f"boxes must be Q x 4 aligned with scores, got {boxes.shape}")
        if not np.all(np.isfinite(scores)):
            raise InputError("scores contain non-finite values")
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise InputError("scores must be probabilities in [0, 1]; apply_sigmoid logits first")

    @property
    def num_queries(self) -> int:
        return int(self.scores.shape[0])


@dataclass(frozen=True)
class PseudoGT:
    """A detector prediction promoted to a training label candidate."""

    annotation: Annotation
    confidence: float
    query_index: int
    verification: Verification = Verification.UNVERIFIED

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"confidence {self.confidence} outside [0, 1]")


def apply_sigmoid(logits: np.ndarray) -> np.ndarray:
    """Elementwise 1 / (1 + e^-x), numerically stable for large |x|."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InputError("logits contain non-finite values")
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def extract_pseudo_gts(
    out: DetectionOutput,
    tau: float,
    image_w: int,
    image_h: int,
    category_names: Mapping[int, str] | None = None,
) -> list[PseudoGT]:
    """Thresholded per-query argmax over the foreground columns.

    Emits at most one pseudo GT per query: the highest-scoring foreground
    class, kept iff its score is >= tau. Results are ordered by descending
    confidence, then ascending query index. Boxes come out in absolute
    corner form, clamped to the image.
    """
    if not 0.0 < tau < 1.0:
        raise InputError(f"tau must lie strictly inside (0, 1), got {tau}")
    foreground = out.scores[:, :-1]
    best_class = foreground.argmax(axis=1)
    best_score = foreground[np.arange(foreground.shape[0]), best_class]
    results: list[PseudoGT] = []
    for q in np.flatnonzero(best_score >= tau):
        cat_id = out.category_ids[int(best_class[q])]
        name = category_names[cat_id] if category_names is not None else str(cat_id)
        box = convert_box(
            BBox.norm_center(*out.boxes[q]), BoxFormat.ABS_CORNER, image_w, image_h
        )
        results.append(
            PseudoGT(
                annotation=Annotation(cat_id, name, box, out.image_id),
                confidence=float(best_score[q]),
                query_index=int(q),
            )
        )
    results.sort(key=lambda p: (-p.confidence, p.query_index))
    return results


def read_detection_document(data: bytes | str | dict) -> DetectionOutput:
    """Parse one detector-output JSON document.

    Schema: {imageId, categoryIds, scoresAreLogits, scores, boxes}. When
    ``scoresAreLogits`` is absent or true, scores pass through the sigmoid.
    """
    if isinstance(data, (bytes, str)):
        try:
            doc = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed detector output document: {exc}") from exc
    else:
        doc = data
    if not isinstance(doc, dict):
        raise InputError("detector output document is not a JSON object")
    missing = [k for k in ("imageId", "categoryIds", "scores", "boxes") if k not in doc]
    if missing:
        raise InputError(f"detector output document missing keys: {missing}")
    scores = np.asarray(doc["scores"], dtype=np.float64)
    if doc.get("scoresAreLogits", True):
        scores = apply_sigmoid(scores)
    return DetectionOutput(
        image_id=doc["imageId"],
        scores=scores,
        boxes=np.asarray(doc["boxes"], dtype=np.float64),
        category_ids=tuple(int(c) for c in doc["categoryIds"]),
    )


def write_detection_document(out: DetectionOutput) -> dict:
    """Detector output as a JSON-ready dict (scores stored as probabilities)."""
    return {
        "imageId": out.image_id,
        "categoryIds": list(out.category_ids),
        "scoresAreLogits": False,
        "scores": out.scores.tolist(),
        "boxes": out.boxes.tolist(),
    }
