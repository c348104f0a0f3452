"""On-disk schemas for intermediate pipeline artifacts (plain JSON)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from verilabel.errors import InputError
from verilabel.manifest import dump_json, load_json
from verilabel.metrics import Detection
from verilabel.model import Annotation, BBox, ImageId
from verilabel.pseudo import PseudoGT, Verification
from verilabel.verify import Verdict


def pseudo_item_to_dict(p: PseudoGT) -> dict:
    x1, y1, x2, y2 = p.annotation.box.coords
    return {
        "imageId": p.annotation.source_image_id,
        "queryIndex": p.query_index,
        "categoryId": p.annotation.category_id,
        "categoryName": p.annotation.category_name,
        "box": [x1, y1, x2, y2],
        "confidence": p.confidence,
        "verification": p.verification.value,
    }


def pseudo_item_from_dict(item: Mapping) -> PseudoGT:
    try:
        box = BBox.abs_corner(*item["box"])
        return PseudoGT(
            annotation=Annotation(
                category_id=int(item["categoryId"]),
                category_name=str(item["categoryName"]),
                box=box,
                source_image_id=item["imageId"],
            ),
            confidence=float(item["confidence"]),
            query_index=int(item["queryIndex"]),
            verification=Verification(item.get("verification", "unverified")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed pseudo GT item {item!r}: {exc}") from exc


def write_pseudo_file(
    path: Path | str,
    items: Sequence[PseudoGT],
    *,
    tau: float,
    task_index: int | None = None,
    backend: str | None = None,
    verdicts: Sequence[Verdict] | None = None,
    unparseable_count: int | None = None,
) -> Path:
    doc: dict = {
        "tau": tau,
        "taskIndex": task_index,
        "items": [pseudo_item_to_dict(p) for p in items],
    }
    if backend is not None:
        doc["backend"] = backend
    if verdicts is not None:
        # latencies are wall-clock observability data and would break the
        # bit-identical-rerun contract; they stay out of the artifact
        doc["verdicts"] = [
            {"answer": v.answer.value, "rawText": v.raw_text} for v in verdicts
        ]
    if unparseable_count is not None:
        doc["unparseableCount"] = unparseable_count
    return dump_json(doc, path)


def read_pseudo_file(path: Path | str) -> tuple[list[PseudoGT], dict]:
    doc = load_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("items"), list):
        raise InputError(f"{path}: not a pseudo GT file (missing items array)")
    return [pseudo_item_from_dict(item) for item in doc["items"]], doc


def write_detections_file(
    path: Path | str, dets_by_image: Mapping[ImageId, Sequence[Detection]]
) -> Path:
    entries = []
    for image_id, dets in dets_by_image.items():
        for d in dets:
            x1, y1, x2, y2 = d.box.coords
            entries.append(
                {
                    "imageId": image_id,
                    "box": [x1, y1, x2, y2],
                    "categoryId": d.category_id,
                    "score": d.score,
                }
            )
    entries.sort(key=lambda e: (str(e["imageId"]), -e["score"], e["categoryId"]))
    return dump_json({"detections": entries}, path)


def read_detections_file(path: Path | str) -> dict[ImageId, list[Detection]]:
    doc = load_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("detections"), list):
        raise InputError(f"{path}: not a detections file (missing detections array)")
    out: dict[ImageId, list[Detection]] = {}
    for i, entry in enumerate(doc["detections"]):
        try:
            det = Detection(
                box=BBox.abs_corner(*entry["box"]),
                category_id=int(entry["categoryId"]),
                score=float(entry["score"]),
            )
            out.setdefault(entry["imageId"], []).append(det)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: detections[{i}] malformed: {exc}") from exc
    return out
