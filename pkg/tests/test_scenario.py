from __future__ import annotations

import pytest

from conftest import make_dataset
from verilabel.errors import InputError
from verilabel.scenario import (
    build_task_view,
    cumulative_categories,
    ordered_universe,
    parse_scenario,
)

UNIVERSE_20 = list(range(1, 21))


class TestParseScenario:
    def test_four_task_split(self):
        sc = parse_scenario("5+5+5+5", UNIVERSE_20)
        assert sc.num_tasks == 4
        assert all(len(s) == 5 for s in sc.task_category_sets)
        union = set()
        for s in sc.task_category_sets:
            assert not (union & s)
            union |= s
        assert union == set(UNIVERSE_20)

    def test_19_plus_1(self):
        sc = parse_scenario("19+1", UNIVERSE_20)
        assert sc.task_category_sets[0] == frozenset(range(1, 20))
        assert sc.task_category_sets[1] == frozenset({20})

    def test_sum_mismatch(self):
        with pytest.raises(InputError, match="sum"):
            parse_scenario("10+5", UNIVERSE_20)

    def test_zero_task(self):
        with pytest.raises(InputError, match="zero"):
            parse_scenario("20+0", list(range(1, 21)))

    def test_bad_syntax(self):
        with pytest.raises(InputError):
            parse_scenario("5+5x", UNIVERSE_20)

    def test_assignment_follows_universe_order(self):
        shuffled = [4, 2, 9, 1, 3, 8, 5, 6, 7, 10]
        sc = parse_scenario("3+7", shuffled)
        assert sc.task_category_sets[0] == frozenset({4, 2, 9})

    def test_deterministic(self):
        assert parse_scenario("10+10", UNIVERSE_20) == parse_scenario("10+10", UNIVERSE_20)


class TestCumulative:
    def test_first_and_last(self):
        sc = parse_scenario("10+5+5", UNIVERSE_20)
        assert cumulative_categories(sc, 1) == sc.task_category_sets[0]
        assert cumulative_categories(sc, 3) == frozenset(UNIVERSE_20)

    def test_partial_union(self):
        sc = parse_scenario("10+5+5", UNIVERSE_20)
        assert len(cumulative_categories(sc, 2)) == 15


def two_task_dataset():
    return make_dataset(
        {
            "both": [(1, (0, 0, 10, 10)), (2, (20, 20, 40, 40))],
            "only_t1": [(1, (5, 5, 15, 15))],
            "only_t2": [(2, (5, 5, 15, 15))],
        },
        categories=[(1, "one"), (2, "two")],
    )


class TestBuildTaskView:
    def test_strips_other_task_annotations(self):
        ds = two_task_dataset()
        sc = parse_scenario("1+1", [1, 2])
        view = build_task_view(ds, sc, 2)
        ids = {im.id for im in view.dataset.images}
        assert ids == {"both", "only_t2"}
        both = next(im for im in view.dataset.images if im.id == "both")
        assert [a.category_id for a in both.annotations] == [2]

    def test_image_without_visible_category_excluded(self):
        ds = two_task_dataset()
        sc = parse_scenario("1+1", [1, 2])
        view = build_task_view(ds, sc, 1)
        assert {im.id for im in view.dataset.images} == {"both", "only_t1"}

    def test_identity_when_only_task_categories_present(self):
        ds = make_dataset(
            {"a": [(1, (0, 0, 10, 10))], "b": [(1, (5, 5, 9, 9))]},
            categories=[(1, "one"), (2, "two")],
        )
        sc = parse_scenario("1+1", [1, 2])
        view = build_task_view(ds, sc, 1)
        assert view.dataset.images == ds.images

    def test_empty_view_is_an_error(self):
        ds = make_dataset({"a": [(1, (0, 0, 10, 10))]}, categories=[(1, "one"), (2, "two")])
        sc = parse_scenario("1+1", [1, 2])
        with pytest.raises(InputError, match="infeasible"):
            build_task_view(ds, sc, 2)

    def test_views_never_duplicate_annotations(self):
        ds = two_task_dataset()
        sc = parse_scenario("1+1", [1, 2])
        total = sum(
            build_task_view(ds, sc, d).dataset.annotation_count() for d in (1, 2)
        )
        assert total <= ds.annotation_count() + 0  # equality here: every ann in some task
        assert total == ds.annotation_count()

    def test_view_annotations_subset_of_original(self):
        ds = two_task_dataset()
        sc = parse_scenario("1+1", [1, 2])
        originals = {im.id: set(im.annotations) for im in ds.images}
        for d in (1, 2):
            for im in build_task_view(ds, sc, d).dataset.images:
                assert set(im.annotations) <= originals[im.id]


class TestOrderedUniverse:
    def test_name_order(self):
        cats = [(1, "bird"), (2, "ant"), (3, "cow")]
        from verilabel.model import Category

        table = [Category(i, n) for i, n in cats]
        assert ordered_universe(table, order="name") == [2, 1, 3]
        assert ordered_universe(table, order="id") == [1, 2, 3]

    def test_override_file_wins(self):
        from verilabel.model import Category

        table = [Category(1, "bird"), Category(2, "ant")]
        assert ordered_universe(table, override_names=["bird", "ant"]) == [1, 2]
        with pytest.raises(InputError):
            ordered_universe(table, override_names=["bird"])
        with pytest.raises(InputError):
            ordered_universe(table, override_names=["bird", "zebra"])
