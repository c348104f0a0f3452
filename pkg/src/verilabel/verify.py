"""Prompt-based verification of pseudo ground truths.

Each pseudo GT is turned into a fixed-template yes/no question about one
image region. The question, the region's corner coordinates, and a binary
grid mask are sent to a verification backend; "yes" accepts the pseudo GT,
"no" rejects it, and anything else is resolved by policy (rejected by
default). The backend can be a remote service speaking the wire protocol or
the in-process oracle that answers from known ground truth.
"""

from __future__ import annotations

import enum
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Protocol, Sequence

import numpy as np
import requests

from verilabel.errors import BackendError, InputError, TransientBackendError
from verilabel.model import Annotation, BBox, BoxFormat, ImageId, ImageRecord, iou
from verilabel.protocol import VERIFY_PATH, GridSpec, VerifyRequest, VerifyResponse
from verilabel.pseudo import PseudoGT, Verification
from verilabel.rng import unit_float

log = logging.getLogger(__name__)

# 336px backbone input with 14px patches -> 24 cells per side.
DEFAULT_GRID_W = 24
DEFAULT_GRID_H = 24

IMAGE_FEATURE_MARKER = "<image feature>"
REGION_FEATURE_MARKER = "<region feature>"

PROMPT_TEMPLATE = (
    IMAGE_FEATURE_MARKER
    + " Considering the region {location} "
    + REGION_FEATURE_MARKER
    + " of the image, would you classify it as a {name} category without any doubt?"
    + " Respond with only 'yes' or 'no'."
)

_NAME_IN_PROMPT_RE = re.compile(
    r"classify it as a (?P<name>.+?) category without any doubt"
)


class VerdictAnswer(enum.Enum):
    YES = "yes"
    NO = "no"
    UNPARSEABLE = "unparseable"


class UnparseablePolicy(enum.Enum):
    REJECT = "reject"
    ACCEPT = "accept"


@dataclass(frozen=True)
class Verdict:
    answer: VerdictAnswer
    raw_text: str
    latency_ms: float = 0.0


@dataclass(frozen=True)
class VerificationPrompt:
    image_ref: ImageId
    prompt_text: str
    box_abs: BBox
    mask_grid: tuple[tuple[int, ...], ...]
    category_name: str


@dataclass(frozen=True)
class VerifyOutcome:
    """Batch result: marked pseudo GTs plus the raw verdicts, input order."""

    items: tuple[PseudoGT, ...]
    verdicts: tuple[Verdict, ...]
    unparseable_count: int


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def make_binary_mask(
    box: BBox, image_w: int, image_h: int, grid_w: int, grid_h: int
) -> np.ndarray:
    """0/1 grid: a cell is set iff its center pixel lies inside the box."""
    if grid_w < 1 or grid_h < 1:
        raise InputError(f"degenerate grid {grid_w}x{grid_h}")
    if box.format is not BoxFormat.ABS_CORNER:
        raise InputError("mask requires a corner-format box")
    x1, y1, x2, y2 = box.coords
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise InputError("mask requires a box with positive area")
    if x1 < 0 or y1 < 0 or x2 > image_w or y2 > image_h:
        raise InputError(f"box {box.coords} not within image {image_w}x{image_h}")
    xs = (np.arange(grid_w) + 0.5) * (image_w / grid_w)
    ys = (np.arange(grid_h) + 0.5) * (image_h / grid_h)
    in_x = (xs >= x1) & (xs <= x2)
    in_y = (ys >= y1) & (ys <= y2)
    return (in_y[:, None] & in_x[None, :]).astype(np.int8)


def format_prompt(
    p: PseudoGT, image: ImageRecord, grid_w: int = DEFAULT_GRID_W, grid_h: int = DEFAULT_GRID_H
) -> VerificationPrompt:
    """Fill the verification template for one pseudo GT.

    The location is the corner box rounded half-up to integers; the image and
    region feature markers are transmitted literally for the backend to
    substitute. A box too small to cover any cell center still gets its
    center cell marked so the mask is never empty.
    """
    box = p.annotation.box
    if box.format is not BoxFormat.ABS_CORNER:
        raise InputError("format_prompt requires the pseudo GT box in corner form")
    name = p.annotation.category_name
    if not name:
        raise InputError(f"pseudo GT on image {image.id!r} has no category name")
    x1, y1, x2, y2 = box.coords
    location = f"[{round_half_up(x1)}, {round_half_up(y1)}, {round_half_up(x2)}, {round_half_up(y2)}]"
    text = PROMPT_TEMPLATE.format(location=location, name=name)
    mask = make_binary_mask(box, image.width, image.height, grid_w, grid_h)
    if mask.sum() == 0:
        ci = min(int(((y1 + y2) / 2.0) * grid_h / image.height), grid_h - 1)
        cj = min(int(((x1 + x2) / 2.0) * grid_w / image.width), grid_w - 1)
        mask[ci, cj] = 1
    return VerificationPrompt(
        image_ref=image.id,
        prompt_text=text,
        box_abs=box,
        mask_grid=tuple(tuple(int(v) for v in row) for row in mask),
        category_name=name,
    )


def category_name_from_prompt(prompt: str) -> str:
    """Recover the object name from a canonical verification prompt."""
    m = _NAME_IN_PROMPT_RE.search(prompt)
    if not m:
        raise InputError("prompt does not follow the verification template")
    return m.group("name")


def parse_verdict(raw: str) -> Verdict:
    """Map free-form backend text onto yes/no/unparseable.

    The leading alphabetic token decides; case, whitespace, and punctuation
    are ignored.
    """
    m = re.search(r"[a-z]+", raw.lower())
    token = m.group(0) if m else ""
    if token == "yes":
        answer = VerdictAnswer.YES
    elif token == "no":
        answer = VerdictAnswer.NO
    else:
        answer = VerdictAnswer.UNPARSEABLE
    return Verdict(answer=answer, raw_text=raw)


def oracle_verdict(
    p: PseudoGT,
    true_gts: Sequence[Annotation],
    iou_thresh: float = 0.5,
    flip_prob: float = 0.0,
    seed: int = 0,
) -> Verdict:
    """Ground-truth stand-in for a verification backend.

    Answers yes iff some true GT of the same category overlaps the pseudo box
    with IoU >= ``iou_thresh``. With ``flip_prob`` > 0 the answer is inverted
    pseudo-randomly but deterministically per (seed, image, query).
    """
    if not 0.0 <= flip_prob < 0.5:
        raise InputError(f"flip_prob must lie in [0, 0.5), got {flip_prob}")
    match = any(
        gt.category_id == p.annotation.category_id
        and iou(p.annotation.box, gt.box) >= iou_thresh
        for gt in true_gts
    )
    if flip_prob > 0.0:
        u = unit_float(seed, p.annotation.source_image_id, p.query_index)
        if u < flip_prob:
            match = not match
    return Verdict(answer=VerdictAnswer.YES if match else VerdictAnswer.NO, raw_text="yes" if match else "no")


class VerificationBackend(Protocol):
    """Answers a verification request with raw response text."""

    def verify(self, request: VerifyRequest) -> str: ...


class OracleBackend:
    """In-process backend answering wire requests from known ground truth.

    The category is recovered from the prompt text and matched by name; the
    box comes from the request. Deterministic given (ground truth, request).
    """

    def __init__(
        self,
        gts_by_image: Mapping[ImageId, Sequence[Annotation]],
        iou_thresh: float = 0.5,
        flip_prob: float = 0.0,
        seed: int = 0,
    ) -> None:
        if not 0.0 <= flip_prob < 0.5:
            raise InputError(f"flip_prob must lie in [0, 0.5), got {flip_prob}")
        self._gts = {str(k): tuple(v) for k, v in gts_by_image.items()}
        self.iou_thresh = iou_thresh
        self.flip_prob = flip_prob
        self.seed = seed

    def verify(self, request: VerifyRequest) -> str:
        if request.image_ref is None:
            raise BackendError("oracle backend requires imageRef")
        gts = self._gts.get(str(request.image_ref))
        if gts is None:
            raise BackendError(f"oracle backend has no ground truth for {request.image_ref!r}")
        name = category_name_from_prompt(request.prompt)
        box = BBox.abs_corner(*request.box)
        match = any(gt.category_name == name and iou(box, gt.box) >= self.iou_thresh for gt in gts)
        if self.flip_prob > 0.0 and request.idempotency_key is not None:
            if unit_float(self.seed, request.idempotency_key) < self.flip_prob:
                match = not match
        return "yes" if match else "no"


class HttpBackend:
    """Client for a remote verification service speaking the wire protocol."""

    def __init__(self, base_url: str, timeout: float = 30.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def verify(self, request: VerifyRequest) -> str:
        url = self.base_url + VERIFY_PATH
        try:
            resp = self._session.post(
                url,
                json=request.model_dump(by_alias=True, exclude_none=True),
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"POST {url} failed: {exc}") from exc
        if resp.status_code >= 500:
            raise TransientBackendError(f"POST {url} returned {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"POST {url} rejected the request: {resp.status_code} {resp.text}")
        try:
            return VerifyResponse.model_validate(resp.json()).text
        except Exception as exc:
            raise BackendError(f"POST {url} returned a non-conforming body: {exc}") from exc


def build_request(prompt: VerificationPrompt, query_index: int) -> VerifyRequest:
    x1, y1, x2, y2 = prompt.box_abs.coords
    grid = GridSpec(
        w=len(prompt.mask_grid[0]),
        h=len(prompt.mask_grid),
        cells=[list(row) for row in prompt.mask_grid],
    )
    return VerifyRequest(
        image_ref=str(prompt.image_ref),
        box=[x1, y1, x2, y2],
        grid=grid,
        prompt=prompt.prompt_text,
        idempotency_key=f"{prompt.image_ref}:{query_index}",
    )


def _call_with_retry(backend: VerificationBackend, request: VerifyRequest, max_retries: int) -> Verdict:
    attempts = 1 + max(0, max_retries)
    last: Exception | None = None
    for _ in range(attempts):
        start = time.perf_counter()
        try:
            text = backend.verify(request)
        except TransientBackendError as exc:
            last = exc
            continue
        latency = (time.perf_counter() - start) * 1000.0
        return replace(parse_verdict(text), latency_ms=latency)
    raise BackendError(
        f"backend failed after {attempts} attempts for {request.idempotency_key}: {last}"
    )


def verify_batch(
    pgs: Sequence[PseudoGT],
    images: Mapping[ImageId, ImageRecord],
    backend: VerificationBackend,
    *,
    grid_w: int = DEFAULT_GRID_W,
    grid_h: int = DEFAULT_GRID_H,
    policy: UnparseablePolicy = UnparseablePolicy.REJECT,
    max_retries: int = 3,
    jobs: int = 1,
) -> VerifyOutcome:
    """Verify a batch of pseudo GTs, preserving input order.

    Boxes and classes are never altered, only the verification mark. Any
    single request that keeps failing after retries fails the whole batch;
    there are no silent drops. Output is identical for any ``jobs`` degree.
    """
    requests_ = []
    for p in pgs:
        image = images.get(p.annotation.source_image_id)
        if image is None:
            raise InputError(f"no image record for pseudo GT on {p.annotation.source_image_id!r}")
        prompt = format_prompt(p, image, grid_w, grid_h)
        requests_.append(build_request(prompt, p.query_index))

    if jobs <= 1 or len(requests_) <= 1:
        verdicts = [_call_with_retry(backend, r, max_retries) for r in requests_]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(pool.map(lambda r: _call_with_retry(backend, r, max_retries), requests_))

    marked: list[PseudoGT] = []
    unparseable = 0
    for p, verdict in zip(pgs, verdicts):
        if verdict.answer is VerdictAnswer.YES:
            status = Verification.ACCEPTED
        elif verdict.answer is VerdictAnswer.NO:
            status = Verification.REJECTED
        else:
            unparseable += 1
            status = (
                Verification.ACCEPTED
                if policy is UnparseablePolicy.ACCEPT
                else Verification.REJECTED
            )
            log.warning(
                "unparseable backend answer %r for %s:%d resolved to %s",
                verdict.raw_text,
                p.annotation.source_image_id,
                p.query_index,
                status.value,
            )
        marked.append(replace(p, verification=status))
    return VerifyOutcome(items=tuple(marked), verdicts=tuple(verdicts), unparseable_count=unparseable)
