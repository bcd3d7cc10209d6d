from __future__ import annotations

import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoretoken.adapters import PRESETS, load_csv, records_from_rows
from scoretoken.dataset import (
    DatasetManifest,
    ScoreRecord,
    SplitSpec,
    artimuse_category_counts,
    artimuse_category_fixture,
    category_stats,
    dumps_manifest,
    extreme_fraction,
    field_selector,
    filter_extremes,
    group_records,
    histogram,
    load_manifest,
    save_manifest,
    select_most_experienced,
    split,
    split_sizes,
)
from scoretoken.errors import MissingExperience, NoExtremeRecords, ParseError, RangeViolation, TooFewRecords


def rec(i, score, **kw) -> ScoreRecord:
    return ScoreRecord(f"r{i:04d}", float(score), 0.0, 100.0, **kw)


def manifest_of(scores, name="m") -> DatasetManifest:
    return DatasetManifest(name, tuple(rec(i, s) for i, s in enumerate(scores)), (0.0, 100.0))


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")


class TestLoad:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("")
        assert len(load_manifest(p)) == 0

    def test_three_records(self, tmp_path):
        p = tmp_path / "three.jsonl"
        write_lines(p, [{"id": str(i), "raw_score": r, "range_min": 1, "range_max": 10} for i, r in enumerate((1, 5.5, 10))])
        m = load_manifest(p)
        np.testing.assert_array_equal(m.normalized_scores(), [0.0, 50.0, 100.0])
        assert m.declared_range == (1.0, 10.0)

    def test_range_violation(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        write_lines(p, [{"id": "x", "raw_score": 11, "range_min": 1, "range_max": 10}])
        with pytest.raises(RangeViolation):
            load_manifest(p)

    def test_parse_error_reports_line(self, tmp_path):
        p = tmp_path / "broken.jsonl"
        p.write_text('{"id": "a", "raw_score": 1, "range_min": 0, "range_max": 10}\n{not json\n')
        with pytest.raises(ParseError) as info:
            load_manifest(p)
        assert info.value.line == 2

    def test_missing_key_is_parse_error(self, tmp_path):
        p = tmp_path / "missing.jsonl"
        write_lines(p, [{"id": "a", "raw_score": 1}])
        with pytest.raises(ParseError):
            load_manifest(p)

    def test_mixed_ranges_rejected(self):
        with pytest.raises(RangeViolation):
            DatasetManifest("m", (ScoreRecord("a", 1, 0, 10), ScoreRecord("b", 1, 0, 5)))

    def test_roundtrip(self, tmp_path):
        m = DatasetManifest(
            "rt",
            (
                ScoreRecord("a", 3.5, 1, 5, "Painting", "Oil", {"language_comment": "calm, ordered"}, {"mos": 81.25}),
                ScoreRecord("b", 5, 1, 5),
            ),
        )
        p = tmp_path / "rt.jsonl"
        save_manifest(m, p)
        again = load_manifest(p)
        assert again.records == m.records
        assert dumps_manifest(again) == dumps_manifest(m)


class TestSplit:
    def test_paper_sizes(self):
        assert split_sizes(10000, 0.9) == (9000, 1000)

    def test_small(self):
        train, test = split(manifest_of([1, 2, 3, 4]), SplitSpec(0.5, 0))
        assert (len(train), len(test)) == (2, 2)

    def test_deterministic(self):
        m = manifest_of(range(50))
        assert split(m, SplitSpec(0.9, 4)) == split(m, SplitSpec(0.9, 4))
        assert split(m, SplitSpec(0.9, 4))[1].ids != split(m, SplitSpec(0.9, 5))[1].ids

    def test_too_few(self):
        with pytest.raises(TooFewRecords):
            split(manifest_of([1]), SplitSpec())

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            SplitSpec(1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 300), st.floats(0.05, 0.95), st.integers(0, 2**31))
    def test_partition(self, n, frac, seed):
        m = manifest_of(np.linspace(0, 100, n))
        train, test = split(m, SplitSpec(frac, seed))
        a, b = set(train.ids), set(test.ids)
        assert not a & b
        assert a | b == set(m.ids)
        assert len(train) + len(test) == n
        if 1 <= frac * n <= n - 1:
            assert abs(len(train) - frac * n) <= 0.5 + 1e-9


class TestFilterExtremes:
    def test_all_extreme(self):
        m = manifest_of([0, 10, 80, 100])
        assert filter_extremes(m) == m

    def test_exact_quota(self):
        m = manifest_of([5] * 8 + [50] * 2)
        assert len(filter_extremes(m, 0.8)) == 10

    def test_budget(self):
        m = manifest_of([5] * 4 + [50] * 5 + [90] * 4)
        out = filter_extremes(m, 0.8)
        assert len(out) == 10
        assert sum(r.normalized == 50 for r in out.records) == 2
        # admitted middles are the first ones in manifest order
        assert [r.id for r in out.records if r.normalized == 50] == ["r0004", "r0005"]

    def test_no_extremes(self):
        with pytest.raises(NoExtremeRecords):
            filter_extremes(manifest_of([40, 50, 60]))

    def test_closed_intervals(self):
        out = filter_extremes(manifest_of([25, 75, 50, 50]), 0.8)
        assert [r.normalized for r in out.records] == [25, 75]

    def test_randomized_quota(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            scores = rng.uniform(0, 100, size=int(rng.integers(1, 60)))
            quota = float(rng.choice([0.5, 0.8, 0.9, 0.75]))
            m = manifest_of(scores)
            try:
                out = filter_extremes(m, quota)
            except NoExtremeRecords:
                continue
            n_ext = sum(1 for s in scores if s <= 25 or s >= 75)
            assert Fraction(sum(1 for r in out.records if r.normalized <= 25 or r.normalized >= 75), len(out)) >= Fraction(str(quota))
            # maximal: one more middle record would break the quota (when any remain)
            n_mid_kept = len(out) - n_ext
            if n_mid_kept < len(scores) - n_ext:
                assert Fraction(n_ext, len(out) + 1) < Fraction(str(quota))

    def test_aux_average_selector(self):
        recs = (
            ScoreRecord("a", 50, 0, 100, aux={"brightness": 90, "contrast": 80}),
            ScoreRecord("b", 50, 0, 100, aux={"brightness": 50, "contrast": 40}),
        )
        m = DatasetManifest("spaq", recs)
        sel = "aux.brightness,aux.contrast"
        assert field_selector(sel)(recs[0]) == 85.0
        assert extreme_fraction(m, sel) == 0.5
        assert filter_extremes(m, 0.5, primary_field=sel).ids == ["a", "b"]


class TestMostExperienced:
    def group(self, exps, ids=None):
        ids = ids or [f"ann{i}" for i in range(len(exps))]
        return [ScoreRecord(i, 50, 0, 100, captions={"image_id": "img"}, aux={"experience": e}) for i, e in zip(ids, exps)]

    def test_single(self):
        g = self.group([3])
        assert select_most_experienced({"img": g}).records == (g[0],)

    def test_max(self):
        g = self.group([2, 7, 5])
        assert select_most_experienced({"img": g}).ids == ["ann1"]

    def test_tie_lowest_id(self):
        g = self.group([7, 7], ids=["b", "a"])
        assert select_most_experienced({"img": g}).ids == ["a"]

    def test_missing(self):
        g = [ScoreRecord("x", 50, 0, 100)]
        with pytest.raises(MissingExperience):
            select_most_experienced({"img": g})

    def test_grouping_by_caption(self):
        recs = self.group([1, 2]) + [ScoreRecord("z", 10, 0, 100, captions={"image_id": "other"}, aux={"experience": 0})]
        groups = group_records(recs, "captions.image_id")
        assert sorted(groups) == ["img", "other"]
        assert select_most_experienced(groups).ids == ["ann1", "z"]


class TestHistogram:
    def test_examples(self):
        assert [c for *_, c in histogram(manifest_of([0]), 10)][0] == 1
        assert [c for *_, c in histogram(manifest_of([0, 100]), 2)] == [1, 1]
        assert [c for *_, c in histogram(manifest_of(range(101)), 10)] == [10] * 9 + [11]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 100), max_size=50), st.integers(1, 30))
    def test_counts_sum(self, scores, bins):
        assert sum(c for *_, c in histogram(manifest_of(scores), bins)) == len(scores)


class TestCategories:
    def test_empty(self):
        stats = category_stats(DatasetManifest("e", ()))
        assert stats.total == 0 and stats.rows == ()

    def test_artimuse_fixture(self):
        stats = category_stats(artimuse_category_fixture())
        assert stats.main_totals["Photography"] == 4111
        assert stats.total == 10000
        assert len(artimuse_category_counts()) == 15
        assert "Total" in stats.format()


class TestAdapters:
    def test_csv_preset(self, tmp_path):
        p = tmp_path / "spaq.csv"
        p.write_text("image,mos,brightness,colorfulness,contrast,sharpness,categories\n"
                     "1.jpg,81.5,60,70,55,90,Animal\n2.jpg,12,20,30,10,15,Indoor\n")
        m = load_csv(p, "spaq")
        assert m.ids == ["1.jpg", "2.jpg"]
        assert m.records[0].aux["mos"] == 81.5
        assert m.records[1].captions["categories"] == "Indoor"

    def test_native_range_normalized(self):
        m = records_from_rows([{"image": "a", "mean_score": "5.5"}], "ava")
        assert m.records[0].normalized == 50.0

    def test_impressions_needs_score_field(self):
        with pytest.raises(ValueError):
            records_from_rows([], "impressions")

    def test_presets_have_valid_ranges(self):
        for p in PRESETS.values():
            assert p.score_range[1] > p.score_range[0]
