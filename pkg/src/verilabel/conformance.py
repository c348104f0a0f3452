"""Backend protocol conformance suite.

Any service claiming to implement the wire protocol must pass these cases.
The suite ships with this package so servers in other codebases can run the
exact same checks; :data:`STUB_DATASET_JSON` is the ground-truth fixture a
stub server should be launched with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable

from verilabel.model import BBox
from verilabel.protocol import (
    DETECT_PATH,
    HEALTH_PATH,
    VERIFY_PATH,
    DetectionDocument,
    VerifyRequest,
)
from verilabel.verify import PROMPT_TEMPLATE, make_binary_mask, round_half_up

# Two 640x480 images: image 1 has a cat at (100,100,300,300) and a dog at
# (350,50,500,200); image 2 has a single cat at (50,50,150,150).
STUB_DATASET = {
    "images": [
        {"id": 1, "file_name": "one.jpg", "width": 640, "height": 480},
        {"id": 2, "file_name": "two.jpg", "width": 640, "height": 480},
    ],
    "annotations": [
        {"id": 1, "image_id": 1, "category_id": 1, "bbox": [100, 100, 200, 200], "iscrowd": 0},
        {"id": 2, "image_id": 1, "category_id": 2, "bbox": [350, 50, 150, 150], "iscrowd": 0},
        {"id": 3, "image_id": 2, "category_id": 1, "bbox": [50, 50, 100, 100], "iscrowd": 0},
    ],
    "categories": [{"id": 1, "name": "cat"}, {"id": 2, "name": "dog"}],
}

STUB_DATASET_JSON = json.dumps(STUB_DATASET, indent=2, sort_keys=True) + "\n"

# (do_request signature) method, path, json payload or None -> (status, body)
Transport = Callable[[str, str, dict | None], tuple[int, Any]]


@dataclass(frozen=True)
class ConformanceCase:
    name: str
    method: str
    path: str
    payload: dict | None
    expect_ok: bool
    check: Callable[[Any], list[str]] | None = None


def _verify_payload(image_ref: str, box: tuple[float, float, float, float], name: str) -> dict:
    x1, y1, x2, y2 = box
    location = f"[{round_half_up(x1)}, {round_half_up(y1)}, {round_half_up(x2)}, {round_half_up(y2)}]"
    mask = make_binary_mask(BBox.abs_corner(*box), 640, 480, 4, 4)
    return {
        "imageRef": image_ref,
        "box": [x1, y1, x2, y2],
        "grid": {"w": 4, "h": 4, "cells": mask.tolist()},
        "prompt": PROMPT_TEMPLATE.format(location=location, name=name),
        "idempotencyKey": f"{image_ref}:0",
    }


def _expect_text(expected: str) -> Callable[[Any], list[str]]:
    def check(body: Any) -> list[str]:
        if not isinstance(body, dict) or "text" not in body:
            return [f"response body lacks a text field: {body!r}"]
        token = str(body["text"]).strip().lower()
        if not token.startswith(expected):
            return [f"expected answer starting with {expected!r}, got {body['text']!r}"]
        return []

    return check


def _check_detection_document(body: Any) -> list[str]:
    problems = []
    try:
        doc = DetectionDocument.model_validate(body)
    except Exception as exc:
        return [f"/detect body does not validate: {exc}"]
    if doc.category_ids != [1, 2]:
        problems.append(f"expected categoryIds [1, 2], got {doc.category_ids}")
    for i, row in enumerate(doc.boxes):
        if not all(0.0 <= v <= 1.0 for v in row):
            problems.append(f"boxes row {i} is not in normalized center form: {row}")
    return problems


def conformance_cases() -> list[ConformanceCase]:
    # IoU of (110,110,310,310) with the cat GT is ~0.82; same box against the
    # dog name must fail the class match.
    good_box = (110.0, 110.0, 310.0, 310.0)
    far_box = (10.0, 10.0, 60.0, 60.0)
    cases = [
        ConformanceCase(
            "healthz", "GET", HEALTH_PATH, None, True,
            lambda body: [] if isinstance(body, dict) and body.get("status") == "ok" else [f"bad health body: {body!r}"],
        ),
        ConformanceCase(
            "verify_same_class_high_iou", "POST", VERIFY_PATH,
            _verify_payload("1", good_box, "cat"), True, _expect_text("yes"),
        ),
        ConformanceCase(
            "verify_wrong_class", "POST", VERIFY_PATH,
            _verify_payload("1", good_box, "dog"), True, _expect_text("no"),
        ),
        ConformanceCase(
            "verify_low_iou", "POST", VERIFY_PATH,
            _verify_payload("1", far_box, "cat"), True, _expect_text("no"),
        ),
        ConformanceCase(
            "verify_second_image", "POST", VERIFY_PATH,
            _verify_payload("2", (55.0, 55.0, 155.0, 155.0), "cat"), True, _expect_text("yes"),
        ),
        ConformanceCase(
            "verify_missing_box", "POST", VERIFY_PATH,
            {k: v for k, v in _verify_payload("1", good_box, "cat").items() if k != "box"},
            False,
        ),
        ConformanceCase(
            "verify_missing_prompt", "POST", VERIFY_PATH,
            {k: v for k, v in _verify_payload("1", good_box, "cat").items() if k != "prompt"},
            False,
        ),
        ConformanceCase(
            "verify_no_image_source", "POST", VERIFY_PATH,
            {k: v for k, v in _verify_payload("1", good_box, "cat").items() if k != "imageRef"},
            False,
        ),
        ConformanceCase(
            "verify_bad_grid_shape", "POST", VERIFY_PATH,
            {**_verify_payload("1", good_box, "cat"), "grid": {"w": 4, "h": 4, "cells": [[1, 0]]}},
            False,
        ),
        ConformanceCase(
            "verify_unknown_image", "POST", VERIFY_PATH,
            _verify_payload("no-such-image", good_box, "cat"), False,
        ),
        ConformanceCase(
            "detect_known_image", "POST", DETECT_PATH,
            {"imageId": 1}, True, _check_detection_document,
        ),
        ConformanceCase(
            "detect_unknown_image", "POST", DETECT_PATH,
            {"imageId": "no-such-image"}, False,
        ),
        ConformanceCase("detect_missing_id", "POST", DETECT_PATH, {}, False),
    ]
    return cases


def run_conformance(do_request: Transport) -> list[str]:
    """Run every case through ``do_request``; returns a list of failures."""
    failures: list[str] = []
    for case in conformance_cases():
        try:
            status, body = do_request(case.method, case.path, case.payload)
        except Exception as exc:  # transport is the caller's code
            failures.append(f"{case.name}: transport raised {exc!r}")
            continue
        if case.expect_ok:
            if not 200 <= status < 300:
                failures.append(f"{case.name}: expected 2xx, got {status} ({body!r})")
                continue
            if case.check is not None:
                failures.extend(f"{case.name}: {p}" for p in case.check(body))
        else:
            if not 400 <= status < 500:
                failures.append(f"{case.name}: expected 4xx, got {status} ({body!r})")
            elif not isinstance(body, dict) or not body:
                failures.append(f"{case.name}: 4xx body is not a machine-readable object: {body!r}")
    return failures


def self_check() -> list[str]:
    """Validate that every ok-case verify payload parses against the models."""
    problems = []
    for case in conformance_cases():
        if case.path == VERIFY_PATH and case.expect_ok and case.payload is not None:
            try:
                VerifyRequest.model_validate(case.payload)
            except Exception as exc:
                problems.append(f"{case.name}: payload does not validate: {exc}")
    return problems
