"""FastAPI service implementing the verilabel backend wire protocol.

Two modes. Stub mode answers from a ground-truth file and is fully
deterministic; it exists for pipeline testing and protocol conformance.
Model mode wraps a real detector plus a region-capable vision-language
model supplied by the deployment: the factory named by ``model_spec`` must
return an object with ``verify_text(request) -> str`` and
``detect(image_id) -> dict``, and is responsible for substituting actual
visual features for the literal ``<image feature>`` / ``<region feature>``
markers in the prompt. A model that fails to load aborts startup.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass
from typing import Protocol

from fastapi import FastAPI, HTTPException

from verilabel.protocol import (
    DETECT_PATH,
    HEALTH_PATH,
    VERIFY_PATH,
    DetectRequest,
    DetectionDocument,
    HealthResponse,
    VerifyRequest,
    VerifyResponse,
)
from verilabel_adapter.stub import (
    StubGroundTruth,
    detection_document,
    load_ground_truth,
    name_from_prompt,
    verify_answer,
)


@dataclass(frozen=True)
class Settings:
    mode: str = "stub"  # "stub" | "model"
    gt_path: str | None = None
    iou_thresh: float = 0.5
    model_spec: str | None = None  # "package.module:factory"
    temperature: float = 0.0  # greedy decoding by default
    max_tokens: int = 8


class ModelBackend(Protocol):
    def verify_text(self, request: VerifyRequest) -> str: ...

    def detect(self, image_id: int | str) -> dict: ...


def _load_model(settings: Settings) -> ModelBackend:
    if not settings.model_spec:
        raise RuntimeError("model mode requires --model package.module:factory")
    module_name, _, attr = settings.model_spec.partition(":")
    if not attr:
        raise RuntimeError(f"model spec {settings.model_spec!r} must look like module:factory")
    try:
        factory = getattr(importlib.import_module(module_name), attr)
        model = factory(settings)
    except Exception as exc:
        raise RuntimeError(f"model backend failed to load: {exc}") from exc
    for required in ("verify_text", "detect"):
        if not callable(getattr(model, required, None)):
            raise RuntimeError(f"model backend lacks a callable {required}()")
    return model


def create_app(settings: Settings) -> FastAPI:
    app = FastAPI(title="verilabel-adapter", version="0.1.0")

    gt: StubGroundTruth | None = None
    model: ModelBackend | None = None
    if settings.mode == "stub":
        if not settings.gt_path:
            raise RuntimeError("stub mode requires a ground-truth annotation file")
        gt = load_ground_truth(settings.gt_path)
    elif settings.mode == "model":
        model = _load_model(settings)
    else:
        raise RuntimeError(f"unknown mode {settings.mode!r}")

    @app.get(HEALTH_PATH, response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse()

    @app.post(VERIFY_PATH, response_model=VerifyResponse)
    def verify(request: VerifyRequest) -> VerifyResponse:
        if model is not None:
            return VerifyResponse(text=model.verify_text(request))
        assert gt is not None
        if request.image_ref is None:
            raise HTTPException(422, detail="stub mode requires imageRef")
        if request.image_ref not in gt.images:
            raise HTTPException(404, detail=f"unknown image {request.image_ref!r}")
        name = name_from_prompt(request.prompt)
        if name is None:
            raise HTTPException(422, detail="prompt does not follow the verification template")
        x1, y1, x2, y2 = request.box
        answer = verify_answer(gt, request.image_ref, (x1, y1, x2, y2), name, settings.iou_thresh)
        return VerifyResponse(text=answer)

    @app.post(DETECT_PATH, response_model=DetectionDocument)
    def detect(request: DetectRequest) -> DetectionDocument:
        if model is not None:
            return DetectionDocument.model_validate(model.detect(request.image_id))
        assert gt is not None
        key = str(request.image_id)
        if key not in gt.images:
            raise HTTPException(404, detail=f"unknown image {request.image_id!r}")
        return DetectionDocument.model_validate(detection_document(gt, key))

    return app
