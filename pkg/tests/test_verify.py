from __future__ import annotations

import numpy as np
import pytest

from conftest import make_dataset
from verilabel.errors import BackendError, InputError
from verilabel.model import Annotation, BBox
from verilabel.pseudo import PseudoGT, Verification
from verilabel.verify import (
    OracleBackend,
    UnparseablePolicy,
    VerdictAnswer,
    build_request,
    category_name_from_prompt,
    format_prompt,
    make_binary_mask,
    oracle_verdict,
    parse_verdict,
    verify_batch,
)


def pgt(box, cat_id=1, name="cat", image_id="im0", conf=0.9, q=0):
    return PseudoGT(
        annotation=Annotation(cat_id, name, BBox.abs_corner(*box), image_id),
        confidence=conf,
        query_index=q,
    )


class TestBinaryMask:
    def test_full_image_all_ones(self):
        mask = make_binary_mask(BBox.abs_corner(0, 0, 640, 480), 640, 480, 6, 5)
        assert mask.shape == (5, 6)
        assert mask.all()

    def test_left_half_box_grid4(self):
        mask = make_binary_mask(BBox.abs_corner(0, 0, 320, 480), 640, 480, 4, 4)
        assert np.array_equal(mask[:, :2], np.ones((4, 2), dtype=np.int8))
        assert not mask[:, 2:].any()

    def test_degenerate_grid(self):
        with pytest.raises(InputError, match="grid"):
            make_binary_mask(BBox.abs_corner(0, 0, 10, 10), 100, 100, 0, 4)

    def test_box_outside_image(self):
        with pytest.raises(InputError, match="not within"):
            make_binary_mask(BBox.abs_corner(0, 0, 200, 200), 100, 100, 4, 4)


class TestFormatPrompt:
    def test_byte_exact_template(self):
        image = make_dataset({"im0": []}, [(1, "cat")]).images[0]
        p = pgt((10.4, 20.5, 110.0, 220.0))
        prompt = format_prompt(p, image)
        assert prompt.prompt_text == (
            "<image feature> Considering the region [10, 21, 110, 220] "
            "<region feature> of the image, would you classify it as a cat "
            "category without any doubt? Respond with only 'yes' or 'no'."
        )

    def test_markers_present_exactly_once(self):
        image = make_dataset({"im0": []}, [(1, "cat")]).images[0]
        text = format_prompt(pgt((5, 5, 50, 50)), image).prompt_text
        assert text.count("<image feature>") == 1
        assert text.count("<region feature>") == 1

    def test_two_pseudo_gts_differ_only_in_location_and_name(self):
        from verilabel.verify import PROMPT_TEMPLATE

        image = make_dataset({"im0": []}, [(1, "cat"), (2, "dog")]).images[0]
        a = format_prompt(pgt((10, 10, 50, 50), 1, "cat"), image).prompt_text
        b = format_prompt(pgt((60, 60, 120, 130), 2, "dog"), image).prompt_text
        assert a != b
        assert a == PROMPT_TEMPLATE.format(location="[10, 10, 50, 50]", name="cat")
        assert b == PROMPT_TEMPLATE.format(location="[60, 60, 120, 130]", name="dog")

    def test_injective_in_location_and_name(self):
        image = make_dataset({"im0": []}, [(1, "cat")]).images[0]
        seen = set()
        for box in ((1, 1, 9, 9), (1, 1, 9, 10), (2, 1, 9, 9)):
            for name in ("cat", "dog"):
                text = format_prompt(pgt(box, name=name), image).prompt_text
                assert text not in seen
                seen.add(text)

    def test_empty_name_rejected(self):
        image = make_dataset({"im0": []}, [(1, "cat")]).images[0]
        with pytest.raises(InputError, match="no category name"):
            format_prompt(pgt((1, 1, 9, 9), name=""), image)

    def test_tiny_box_still_marks_a_cell(self):
        image = make_dataset({"im0": []}, [(1, "cat")]).images[0]
        prompt = format_prompt(pgt((301.0, 201.0, 303.0, 203.0)), image, 4, 4)
        assert sum(sum(row) for row in prompt.mask_grid) == 1

    def test_name_recoverable_from_prompt(self):
        image = make_dataset({"im0": []}, [(1, "potted plant")]).images[0]
        text = format_prompt(pgt((1, 1, 9, 9), name="potted plant"), image).prompt_text
        assert category_name_from_prompt(text) == "potted plant"


class TestParseVerdict:
    @pytest.mark.parametrize(
        "raw", ["yes", "Yes", "YES", "yes.", " Yes!", "YES, clearly", "\tyes\n"]
    )
    def test_yes_variants(self, raw):
        assert parse_verdict(raw).answer is VerdictAnswer.YES

    @pytest.mark.parametrize("raw", ["no", "No.", "no, it is a dog", "NO!"])
    def test_no_variants(self, raw):
        assert parse_verdict(raw).answer is VerdictAnswer.NO

    @pytest.mark.parametrize("raw", ["it might be", "maybe", "", "42", "yesish"])
    def test_unparseable(self, raw):
        assert parse_verdict(raw).answer is VerdictAnswer.UNPARSEABLE


class TestOracleVerdict:
    def test_exact_match_yes(self):
        gt = [Annotation(1, "cat", BBox.abs_corner(10, 10, 50, 50), "im0")]
        v = oracle_verdict(pgt((10, 10, 50, 50)), gt)
        assert v.answer is VerdictAnswer.YES

    def test_low_iou_no(self):
        # IoU between (0,0,10,10) and (0,0,30,10): inter 100, union 300 -> 1/3 < 0.5
        gt = [Annotation(1, "cat", BBox.abs_corner(0, 0, 30, 10), "im0")]
        v = oracle_verdict(pgt((0, 0, 10, 10)), gt, iou_thresh=0.5)
        assert v.answer is VerdictAnswer.NO

    def test_wrong_class_no(self):
        gt = [Annotation(2, "dog", BBox.abs_corner(10, 10, 50, 50), "im0")]
        assert oracle_verdict(pgt((10, 10, 50, 50)), gt).answer is VerdictAnswer.NO

    def test_flip_determinism(self):
        gt = [Annotation(1, "cat", BBox.abs_corner(10, 10, 50, 50), "im0")]
        items = [pgt((10, 10, 50, 50), q=q) for q in range(20)]
        run1 = [oracle_verdict(p, gt, flip_prob=0.3, seed=5).answer for p in items]
        run2 = [oracle_verdict(p, gt, flip_prob=0.3, seed=5).answer for p in items]
        assert run1 == run2
        assert any(a is VerdictAnswer.NO for a in run1)  # some flips at p=0.3

    def test_flip_prob_range(self):
        with pytest.raises(InputError):
            oracle_verdict(pgt((1, 1, 2, 2)), [], flip_prob=0.7)


class _ScriptedBackend:
    def __init__(self, answers):
        self.answers = answers
        self.calls = 0

    def verify(self, request):
        answer = self.answers[self.calls % len(self.answers)]
        self.calls += 1
        if isinstance(answer, Exception):
            raise answer
        return answer


def _world():
    ds = make_dataset(
        {
            "im0": [(1, (10, 10, 110, 110)), (2, (200, 200, 300, 300))],
            "im1": [(1, (50, 50, 150, 150))],
        },
        categories=[(1, "cat"), (2, "dog")],
    )
    return ds


class TestVerifyBatch:
    def test_oracle_accepts_good_rejects_wrong_class(self):
        ds = _world()
        backend = OracleBackend({im.id: im.annotations for im in ds.images})
        items = [
            pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 0),
            pgt((12, 12, 108, 108), 2, "dog", "im0", 0.8, 1),  # wrong class there
        ]
        out = verify_batch(items, ds.images_by_id(), backend)
        assert [p.verification for p in out.items] == [
            Verification.ACCEPTED,
            Verification.REJECTED,
        ]

    def test_counts_and_order_preserved(self):
        ds = _world()
        backend = _ScriptedBackend(["yes", "no", "yes"])
        items = [pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, q) for q in range(3)]
        out = verify_batch(items, ds.images_by_id(), backend)
        assert [p.query_index for p in out.items] == [0, 1, 2]
        accepted = sum(p.verification is Verification.ACCEPTED for p in out.items)
        rejected = sum(p.verification is Verification.REJECTED for p in out.items)
        assert accepted + rejected == len(items)

    def test_boxes_and_classes_untouched(self):
        ds = _world()
        backend = _ScriptedBackend(["no"])
        items = [pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 0)]
        out = verify_batch(items, ds.images_by_id(), backend)
        assert out.items[0].annotation == items[0].annotation
        assert out.items[0].confidence == items[0].confidence

    def test_unparseable_default_rejects_with_warning(self, caplog):
        ds = _world()
        backend = _ScriptedBackend(["maybe"])
        items = [pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 0)]
        with caplog.at_level("WARNING"):
            out = verify_batch(items, ds.images_by_id(), backend)
        assert out.items[0].verification is Verification.REJECTED
        assert out.unparseable_count == 1
        assert any("unparseable" in r.message for r in caplog.records)

    def test_unparseable_accept_policy(self):
        ds = _world()
        backend = _ScriptedBackend(["hmm"])
        items = [pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 0)]
        out = verify_batch(items, ds.images_by_id(), backend, policy=UnparseablePolicy.ACCEPT)
        assert out.items[0].verification is Verification.ACCEPTED

    def test_transient_failures_retried_then_fatal(self):
        from verilabel.errors import TransientBackendError

        ds = _world()
        backend = _ScriptedBackend([TransientBackendError("boom"), "yes"])
        items = [pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 0)]
        out = verify_batch(items, ds.images_by_id(), backend, max_retries=2)
        assert out.items[0].verification is Verification.ACCEPTED

        always_down = _ScriptedBackend([TransientBackendError("boom")])
        with pytest.raises(BackendError, match="after 3 attempts"):
            verify_batch(items, ds.images_by_id(), backend=always_down, max_retries=2)

    def test_parallelism_does_not_change_results(self):
        ds = _world()
        items = [
            pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 0),
            pgt((202, 202, 298, 298), 2, "dog", "im0", 0.8, 1),
            pgt((52, 52, 148, 148), 1, "cat", "im1", 0.7, 2),
            pgt((0, 0, 20, 20), 1, "cat", "im1", 0.6, 3),
        ]
        def run(jobs):
            backend = OracleBackend({im.id: im.annotations for im in ds.images})
            out = verify_batch(items, ds.images_by_id(), backend, jobs=jobs)
            # latencies are wall-clock; everything else must be identical
            return out.items, [v.answer for v in out.verdicts], out.unparseable_count

        assert run(1) == run(4)

    def test_request_carries_idempotency_key(self):
        image = _world().images[0]
        prompt = format_prompt(pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 7), image)
        request = build_request(prompt, 7)
        assert request.idempotency_key == "im0:7"
        assert request.grid.w == 24 and request.grid.h == 24

    def test_oracle_backend_matches_direct_oracle(self):
        ds = _world()
        gts = {im.id: im.annotations for im in ds.images}
        backend = OracleBackend(gts)
        items = [
            pgt((12, 12, 108, 108), 1, "cat", "im0", 0.9, 0),
            pgt((12, 12, 108, 108), 2, "dog", "im0", 0.8, 1),
            pgt((0, 0, 20, 20), 1, "cat", "im1", 0.6, 2),
        ]
        out = verify_batch(items, ds.images_by_id(), backend)
        for p, marked in zip(items, out.items):
            direct = oracle_verdict(p, gts[p.annotation.source_image_id])
            expected = (
                Verification.ACCEPTED if direct.answer is VerdictAnswer.YES else Verification.REJECTED
            )
            assert marked.verification is expected
