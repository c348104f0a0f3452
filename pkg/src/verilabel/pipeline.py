"""End-to-end pipeline runs over synthetic worlds.

A simulation is the whole method exercised at desk scale: generate a world,
slice it into tasks, and for every task let the stale detector propose
pseudo labels for old classes, optionally verify them against the oracle,
merge with the task's real labels, and score the merged label set against
the true annotations. Two arms run on identical detector outputs, one with
verification and one without, so their gap isolates the effect of
filtering.

Trained-model quality is out of scope here; the quality of the training
labels themselves is the measured proxy. The detector used at task d was
produced by d-1 incremental handoffs, so its staleness is d-1 and its
per-class knowledge decays accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from verilabel.errors import InputError
from verilabel.metrics import Detection, EvalConfig, evaluate
from verilabel.merge import merge_labels
from verilabel.model import Annotation, Dataset, ImageId
from verilabel.pseudo import DEFAULT_TAU, PseudoGT, Verification, extract_pseudo_gts
from verilabel.scenario import build_task_view, cumulative_categories, parse_scenario
from verilabel.synth import (
    SynthWorldConfig,
    SyntheticDetector,
    generate_world,
    known_ids_for_task,
    synth_categories,
    synthetic_detect,
)
from verilabel.verify import OracleBackend, verify_batch

ARM_UNFILTERED = "unfiltered"
ARM_FILTERED = "filtered"


@dataclass(frozen=True)
class TaskOutcome:
    task_index: int
    cumulative_class_count: int
    mean_ap50: float
    n_real: int
    n_pseudo: int
    n_accepted: int


@dataclass(frozen=True)
class ArmResult:
    name: str
    tasks: tuple[TaskOutcome, ...]

    @property
    def final_mean_ap50(self) -> float:
        return self.tasks[-1].mean_ap50


@dataclass(frozen=True)
class SimulateResult:
    scenario: str
    seed: int
    tau: float
    arms: tuple[ArmResult, ...]
    merged: dict[tuple[str, int], Dataset]

    def arm(self, name: str) -> ArmResult:
        for arm in self.arms:
            if arm.name == name:
                return arm
        raise InputError(f"no arm named {name!r}")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "tau": self.tau,
            "arms": [
                {
                    "name": arm.name,
                    "tasks": [
                        {
                            "taskIndex": t.task_index,
                            "cumulativeClasses": t.cumulative_class_count,
                            "meanAP50": t.mean_ap50,
                            "nReal": t.n_real,
                            "nPseudo": t.n_pseudo,
                            "nAccepted": t.n_accepted,
                        }
                        for t in arm.tasks
                    ],
                }
                for arm in self.arms
            ],
        }

    def comparison_table(self) -> str:
        header_counts = [str(t.cumulative_class_count) for t in self.arms[0].tasks]
        lines = [
            f"scenario {self.scenario}  seed {self.seed}  (label mAP50 per cumulative class count)",
            f"{'arm':<14}" + "".join(f"{c:>10}" for c in header_counts),
        ]
        for arm in self.arms:
            cells = "".join(f"{t.mean_ap50:>10.4f}" for t in arm.tasks)
            lines.append(f"{arm.name:<14}{cells}")
        return "\n".join(lines)


def _truth_restricted(
    world: Dataset, image_ids: Sequence[ImageId], visible: frozenset[int]
) -> Dataset:
    by_id = world.images_by_id()
    images = []
    for image_id in image_ids:
        im = by_id[image_id]
        kept = tuple(a for a in im.annotations if a.category_id in visible)
        images.append(replace(im, annotations=kept))
    return Dataset(images=tuple(images), categories=world.categories, provenance=world.provenance)


def _label_detections(
    view_images: Sequence[ImageId],
    real_by_image: Mapping[ImageId, Sequence[Annotation]],
    accepted_by_image: Mapping[ImageId, Sequence[PseudoGT]],
) -> dict[ImageId, list[Detection]]:
    dets: dict[ImageId, list[Detection]] = {}
    for image_id in view_images:
        items = [Detection(a.box, a.category_id, 1.0) for a in real_by_image.get(image_id, ())]
        items.extend(
            Detection(p.annotation.box, p.annotation.category_id, p.confidence)
            for p in accepted_by_image.get(image_id, ())
        )
        dets[image_id] = items
    return dets


def run_simulation(
    cfg: SynthWorldConfig,
    scenario_spec: str = "5+5+5+5",
    *,
    tau: float = DEFAULT_TAU,
    oracle_iou: float = 0.5,
    flip_prob: float = 0.0,
    nms_iou: float | None = None,
    jobs: int = 1,
    arms: Sequence[str] = (ARM_UNFILTERED, ARM_FILTERED),
) -> SimulateResult:
    """Run the full multi-task pipeline on a fresh synthetic world."""
    for arm in arms:
        if arm not in (ARM_UNFILTERED, ARM_FILTERED):
            raise InputError(f"unknown arm {arm!r}")
    categories = [c.id for c in synth_categories(cfg.num_classes)]
    sc = parse_scenario(scenario_spec, categories)
    world = generate_world(cfg, num_tasks=sc.num_tasks)
    names = world.category_names()
    images_by_id = world.images_by_id()
    true_gts_by_image = {im.id: im.annotations for im in world.images}

    arm_tasks: dict[str, list[TaskOutcome]] = {arm: [] for arm in arms}
    merged_store: dict[tuple[str, int], Dataset] = {}

    for d in range(1, sc.num_tasks + 1):
        view = build_task_view(world, sc, d)
        view_ids = [im.id for im in view.dataset.images]
        real_by_image = {im.id: im.annotations for im in view.dataset.images}
        cumulative = cumulative_categories(sc, d)
        eval_gt = _truth_restricted(world, view_ids, cumulative)

        proposals: list[PseudoGT] = []
        if d >= 2:
            known = known_ids_for_task(world.categories, cumulative_categories(sc, d - 1))
            detector = SyntheticDetector(
                known_category_ids=known, trained_at_task=d - 1, config=cfg
            )
            for image_id in view_ids:
                im = images_by_id[image_id]
                out = synthetic_detect(detector, im, staleness=d - 1)
                proposals.extend(
                    extract_pseudo_gts(out, tau, im.width, im.height, names)
                )

        for arm in arms:
            if arm == ARM_FILTERED and proposals:
                backend = OracleBackend(
                    true_gts_by_image,
                    iou_thresh=oracle_iou,
                    flip_prob=flip_prob,
                    seed=cfg.seed,
                )
                outcome = verify_batch(proposals, images_by_id, backend, jobs=jobs)
                accepted = [p for p in outcome.items if p.verification is Verification.ACCEPTED]
            else:
                accepted = [
                    replace(p, verification=Verification.ACCEPTED) for p in proposals
                ]
            accepted_by_image: dict[ImageId, list[PseudoGT]] = {}
            for p in accepted:
                accepted_by_image.setdefault(p.annotation.source_image_id, []).append(p)

            merged = merge_labels(view, accepted_by_image, nms_iou=nms_iou)
            merged_store[(arm, d)] = merged

            report = evaluate(
                _label_detections(view_ids, real_by_image, accepted_by_image),
                eval_gt,
                EvalConfig.voc(),
            )
            arm_tasks[arm].append(
                TaskOutcome(
                    task_index=d,
                    cumulative_class_count=len(cumulative),
                    mean_ap50=report.mean_ap50,
                    n_real=sum(len(v) for v in real_by_image.values()),
                    n_pseudo=len(proposals),
                    n_accepted=len(accepted),
                )
            )

    return SimulateResult(
        scenario=scenario_spec,
        seed=cfg.seed,
        tau=tau,
        arms=tuple(ArmResult(name=arm, tasks=tuple(arm_tasks[arm])) for arm in arms),
        merged=merged_store,
    )
