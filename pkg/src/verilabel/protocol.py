"""Wire protocol for verification/detection backends.

This module is the single source of truth for the JSON bodies exchanged with
a backend service. Requests and responses use camelCase keys on the wire;
any conforming server must accept exactly these shapes on ``/verify`` and
``/detect`` and answer health checks on ``/healthz``.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator

VERIFY_PATH = "/verify"
DETECT_PATH = "/detect"
HEALTH_PATH = "/healthz"


class GridSpec(BaseModel):
    """Binary region mask laid over the image as ``h`` rows by ``w`` columns."""

    model_config = ConfigDict(populate_by_name=True)

    w: int = Field(ge=1)
    h: int = Field(ge=1)
    cells: list[list[int]]

    @model_validator(mode="after")
    def _check_shape(self) -> "GridSpec":
        if len(self.cells) != self.h:
            raise ValueError(f"grid declares h={self.h} but has {len(self.cells)} rows")
        for i, row in enumerate(self.cells):
            if len(row) != self.w:
                raise ValueError(f"grid row {i} has {len(row)} cells, expected w={self.w}")
            if any(v not in (0, 1) for v in row):
                raise ValueError(f"grid row {i} contains values other than 0/1")
        return self


class VerifyRequest(BaseModel):
    """One yes/no verification query for a region of an image."""

    model_config = ConfigDict(populate_by_name=True)

    image_ref: str | None = Field(default=None, alias="imageRef")
    image_b64: str | None = Field(default=None, alias="imageB64")
    box: list[float] = Field(min_length=4, max_length=4)
    grid: GridSpec
    prompt: str
    idempotency_key: str | None = Field(default=None, alias="idempotencyKey")

    @model_validator(mode="after")
    def _check_image_source(self) -> "VerifyRequest":
        if self.image_ref is None and self.image_b64 is None:
            raise ValueError("one of imageRef or imageB64 is required")
        x1, y1, x2, y2 = self.box
        if x2 <= x1 or y2 <= y1:
            raise ValueError(f"box {self.box} is degenerate")
        return self


class VerifyResponse(BaseModel):
    text: str


class DetectRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    image_id: int | str = Field(alias="imageId")


class DetectionDocument(BaseModel):
    """Per-image detector output; also the on-disk detector file schema."""

    model_config = ConfigDict(populate_by_name=True)

    image_id: int | str = Field(alias="imageId")
    category_ids: list[int] = Field(alias="categoryIds", min_length=1)
    scores_are_logits: bool = Field(default=True, alias="scoresAreLogits")
    scores: list[list[float]]
    boxes: list[list[float]]

    @model_validator(mode="after")
    def _check_shapes(self) -> "DetectionDocument":
        expected_cols = len(self.category_ids) + 1
        if not self.scores:
            raise ValueError("scores must have at least one query row")
        for i, row in enumerate(self.scores):
            if len(row) != expected_cols:
                raise ValueError(
                    f"scores row {i} has {len(row)} columns, expected C+1={expected_cols}"
                )
        if len(self.boxes) != len(self.scores):
            raise ValueError(
                f"{len(self.boxes)} boxes for {len(self.scores)} score rows"
            )
        for i, row in enumerate(self.boxes):
            if len(row) != 4:
                raise ValueError(f"boxes row {i} has {len(row)} values, expected 4")
        return self


class HealthResponse(BaseModel):
    status: str = "ok"


class ProtocolErrorResponse(BaseModel):
    """Machine-readable 4xx body: FastAPI-compatible ``detail`` field."""

    detail: object
