"""Task scenarios: ordered partitions of the category universe.

A scenario string like ``"5+5+5+5"`` splits an ordered category universe into
disjoint, consecutive task sets. A task view is the training slice for one
task: images keep only that task's annotations, and images that end up with
none are excluded entirely. Annotations of earlier tasks are deliberately
stripped; recovering them is exactly what pseudo-labeling is for.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Sequence

from verilabel.errors import InputError
from verilabel.model import Category, Dataset

_SCENARIO_RE = re.compile(r"^\d+(\+\d+)*$")


@dataclass(frozen=True)
class TaskScenario:
    name: str
    task_category_sets: tuple[frozenset[int], ...]

    @property
    def num_tasks(self) -> int:
        return len(self.task_category_sets)


@dataclass(frozen=True)
class TaskView:
    task_index: int
    dataset: Dataset
    visible_categories: frozenset[int]


def ordered_universe(
    categories: Sequence[Category],
    *,
    order: str = "id",
    override_names: Sequence[str] | None = None,
) -> list[int]:
    """Category ids in the order used for scenario slicing.

    ``order`` is "id" (ascending id, the COCO convention) or "name"
    (alphabetical, the VOC convention). An explicit name list overrides both.
    """
    by_name = {c.name: c.id for c in categories}
    if override_names is not None:
        names = [n.strip() for n in override_names if n.strip()]
        unknown = [n for n in names if n not in by_name]
        if unknown:
            raise InputError(f"category order override names unknown: {unknown}")
        if len(names) != len(categories) or len(set(names)) != len(names):
            raise InputError("category order override must list every category exactly once")
        return [by_name[n] for n in names]
    if order == "name":
        return [c.id for c in sorted(categories, key=lambda c: c.name)]
    if order == "id":
        return [c.id for c in sorted(categories, key=lambda c: c.id)]
    raise InputError(f"unknown category order {order!r}")


def parse_scenario(spec: str, category_universe: Sequence[int]) -> TaskScenario:
    """Parse ``"n1+n2+..."`` into consecutive task sets over the universe."""
    spec = spec.strip()
    if not _SCENARIO_RE.match(spec):
        raise InputError(f"scenario {spec!r} does not match <int>(+<int>)*")
    sizes = [int(part) for part in spec.split("+")]
    if any(s == 0 for s in sizes):
        raise InputError(f"scenario {spec!r} contains a zero-size task")
    universe = list(category_universe)
    if len(set(universe)) != len(universe):
        raise InputError("category universe contains duplicate ids")
    if sum(sizes) != len(universe):
        raise InputError(
            f"scenario {spec!r} sizes sum to {sum(sizes)} but the universe has "
            f"{len(universe)} categories"
        )
    sets = []
    cursor = 0
    for size in sizes:
        sets.append(frozenset(universe[cursor : cursor + size]))
        cursor += size
    return TaskScenario(name=spec, task_category_sets=tuple(sets))


def cumulative_categories(sc: TaskScenario, d: int) -> frozenset[int]:
    """Union of the first ``d`` task category sets (1-based ``d``)."""
    if not 1 <= d <= sc.num_tasks:
        raise InputError(f"task index {d} outside 1..{sc.num_tasks}")
    out: frozenset[int] = frozenset()
    for s in sc.task_category_sets[:d]:
        out |= s
    return out


def build_task_view(ds: Dataset, sc: TaskScenario, d: int) -> TaskView:
    """Materialize task ``d``'s training view of ``ds``.

    Images are kept iff they carry at least one task-``d`` annotation, and
    kept images retain only task-``d`` annotations.
    """
    if not 1 <= d <= sc.num_tasks:
        raise InputError(f"task index {d} outside 1..{sc.num_tasks}")
    visible = sc.task_category_sets[d - 1]
    images = []
    for im in ds.images:
        kept = tuple(a for a in im.annotations if a.category_id in visible)
        if kept:
            images.append(replace(im, annotations=kept))
    if not images:
        raise InputError(
            f"scenario {sc.name!r} task {d} selects no images; infeasible on this dataset"
        )
    filtered = Dataset(images=tuple(images), categories=ds.categories, provenance=ds.provenance)
    return TaskView(task_index=d, dataset=filtered, visible_categories=visible)
