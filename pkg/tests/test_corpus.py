from __future__ import annotations

import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpmatch import corpus
from kpmatch.errors import (
    BadLabelValue,
    BadRatios,
    BadStanceValue,
    CorpusFormatError,
    EmptyField,
    EmptyText,
    MissingColumn,
    TopicCountMismatch,
    UnknownTopicInAssignment,
)

from conftest import make_records


class TestLoadPairCsv:
    def test_fixture_rows(self, table1_records):
        assert len(table1_records) == 3
        first = table1_records[0]
        assert first.topic == "We should abandon the use of school uniform"
        assert first.stance == -1
        assert first.label == 0
        assert first.pair_id == "p000000"
        assert [r.label for r in table1_records] == [0, 0, 1]

    def test_record_order_follows_file_order(self, smoke_records):
        assert [r.pair_id for r in smoke_records] == [
            f"p{i:06d}" for i in range(len(smoke_records))
        ]

    def test_missing_path(self, tmp_path):
        with pytest.raises(CorpusFormatError):
            corpus.load_argkp(tmp_path / "nope.csv")

    def test_unknown_format(self, data_dir):
        with pytest.raises(CorpusFormatError):
            corpus.load_argkp(data_dir / "smoke.csv", "parquet")

    def test_directory_rejected(self, data_dir):
        with pytest.raises(CorpusFormatError, match="directory"):
            corpus.load_argkp(data_dir / "three_file")

    def _write(self, tmp_path, rows, header=("topic", "argument", "key_point", "stance", "label")):
        path = tmp_path / "bad.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        return path

    def test_missing_column(self, tmp_path):
        path = self._write(tmp_path, [], header=("topic", "argument", "key_point"))
        with pytest.raises(MissingColumn, match="stance"):
            corpus.load_argkp(path)

    def test_empty_field_names_row(self, tmp_path):
        path = self._write(tmp_path, [("t", "a", "", "1", "0")])
        with pytest.raises(EmptyField, match="row 2"):
            corpus.load_argkp(path)

    def test_bad_label(self, tmp_path):
        path = self._write(tmp_path, [("t", "a", "k", "1", "2")])
        with pytest.raises(BadLabelValue):
            corpus.load_argkp(path)

    def test_bad_stance(self, tmp_path):
        path = self._write(tmp_path, [("t", "a", "k", "up", "1")])
        with pytest.raises(BadStanceValue):
            corpus.load_argkp(path)


class TestLoadThreeFile:
    def test_join(self, data_dir):
        records = corpus.load_argkp(data_dir / "three_file", "three_file")
        assert len(records) == 3
        by_id = {r.pair_id: r for r in records}
        assert by_id["arg_0|kp_0"].label == 0
        assert by_id["arg_2|kp_2"].label == 1
        assert by_id["arg_1|kp_1"].topic == "We should adopt atheism"
        # the joined rows match the flat fixture, which lists the same pairs
        flat = corpus.load_argkp(data_dir / "table1_pairs.csv")
        for got, want in zip(records, flat):
            assert (got.topic, got.argument, got.key_point, got.stance, got.label) == (
                want.topic, want.argument, want.key_point, want.stance, want.label
            )

    def test_file_rejected(self, data_dir):
        with pytest.raises(CorpusFormatError, match="file"):
            corpus.load_argkp(data_dir / "table1_pairs.csv", "three_file")

    def test_missing_member_file(self, data_dir, tmp_path):
        root = tmp_path / "three"
        root.mkdir()
        for name in ("arguments.csv", "key_points.csv"):
            root.joinpath(name).write_text(
                (data_dir / "three_file" / name).read_text("utf-8"), encoding="utf-8"
            )
        with pytest.raises(CorpusFormatError, match="labels.csv"):
            corpus.load_argkp(root, "three_file")

    def test_unknown_arg_id(self, data_dir, tmp_path):
        root = tmp_path / "three"
        root.mkdir()
        for name in ("arguments.csv", "key_points.csv"):
            root.joinpath(name).write_text(
                (data_dir / "three_file" / name).read_text("utf-8"), encoding="utf-8"
            )
        root.joinpath("labels.csv").write_text(
            "arg_id,key_point_id,label\narg_9,kp_0,1\n", encoding="utf-8"
        )
        with pytest.raises(CorpusFormatError, match="arg_9"):
            corpus.load_argkp(root, "three_file")


class TestFullStops:
    @pytest.mark.parametrize("text,want", [
        ("ends bare", "ends bare."),
        ("already ends.", "already ends."),
        ("question?", "question?"),
        ("bang!", "bang!"),
        ("trailing space ", "trailing space."),
    ])
    def test_cases(self, text, want):
        assert corpus.add_full_stops(text) == want

    @pytest.mark.parametrize("text", ["", "   ", "\n\t"])
    def test_empty_rejected(self, text):
        with pytest.raises(EmptyText):
            corpus.add_full_stops(text)

    @given(st.text(max_size=80).filter(lambda t: t.strip()))
    def test_idempotent_and_terminal(self, text):
        once = corpus.add_full_stops(text)
        assert once.endswith(corpus.TERMINAL_PUNCTUATION)
        assert corpus.add_full_stops(once) == once

    def test_with_full_stops_copies(self):
        r = make_records(1)[0]
        out = corpus.with_full_stops(r)
        assert out.argument.endswith(".")
        assert out.key_point.endswith(".")
        assert out.pair_id == r.pair_id and out.label == r.label


class TestTokenize:
    def test_drops_stopwords_and_punctuation(self):
        stop = frozenset({"the", "a", "is"})
        got = corpus.tokenize_and_filter("The cat, a 'good' cat, is HERE!", stop)
        assert got == ["cat", "good", "cat", "here"]

    def test_inner_apostrophe_kept(self):
        assert corpus.tokenize_and_filter("don't stop", frozenset()) == ["don't", "stop"]

    def test_default_stopwords(self):
        stop = corpus.load_default_stopwords()
        assert "the" in stop and "and" in stop
        assert len(stop) > 50


class TestCrossDomainSplit:
    def test_topics_disjoint_and_partition(self):
        records = make_records(60, n_topics=6)
        split = corpus.split_cross_domain(records, 3, 1, 2, seed=13)
        names = {s: {r.topic for r in rows} for s, rows in split.splits().items()}
        assert len(names["train"]) == 3
        assert len(names["dev"]) == 1
        assert len(names["test"]) == 2
        assert not (names["train"] & names["dev"])
        assert not (names["train"] & names["test"])
        assert not (names["dev"] & names["test"])
        got = sorted(r.pair_id for rows in split.splits().values() for r in rows)
        assert got == sorted(r.pair_id for r in records)

    def test_seed_determinism(self):
        records = make_records(40, n_topics=8)
        a = corpus.split_cross_domain(records, 5, 1, 2, seed=13)
        b = corpus.split_cross_domain(records, 5, 1, 2, seed=13)
        assert a.topic_assignment == b.topic_assignment
        c = corpus.split_cross_domain(records, 5, 1, 2, seed=14)
        assert any(
            corpus.split_cross_domain(records, 5, 1, 2, seed=s).topic_assignment
            != a.topic_assignment
            for s in range(14, 30)
        ) or c.topic_assignment != a.topic_assignment

    def test_count_mismatch(self):
        records = make_records(20, n_topics=4)
        with pytest.raises(TopicCountMismatch):
            corpus.split_cross_domain(records, 3, 1, 2, seed=13)

    def test_fixed_assignment(self):
        records = make_records(20, n_topics=4)
        topics = sorted({r.topic for r in records})
        assignment = {topics[0]: "train", topics[1]: "train",
                      topics[2]: "dev", topics[3]: "test"}
        split = corpus.split_cross_domain(records, 2, 1, 1, seed=0,
                                          fixed_assignment=assignment)
        assert {r.topic for r in split.dev} == {topics[2]}
        # seed-independent under a fixed assignment
        other = corpus.split_cross_domain(records, 2, 1, 1, seed=99,
                                          fixed_assignment=assignment)
        assert [r.pair_id for r in other.test] == [r.pair_id for r in split.test]

    def test_fixed_assignment_errors(self):
        records = make_records(20, n_topics=4)
        topics = sorted({r.topic for r in records})
        with pytest.raises(UnknownTopicInAssignment):
            corpus.split_cross_domain(
                records, 2, 1, 1, seed=0,
                fixed_assignment={**{t: "train" for t in topics}, "ghost": "dev"},
            )
        with pytest.raises(TopicCountMismatch):
            corpus.split_cross_domain(
                records, 2, 1, 1, seed=0,
                fixed_assignment={topics[0]: "train"},
            )
        with pytest.raises(UnknownTopicInAssignment):
            corpus.split_cross_domain(
                records, 2, 1, 1, seed=0,
                fixed_assignment={**{t: "train" for t in topics[:3]}, topics[3]: "eval"},
            )


class TestInDomainSplit:
    RATIOS = (71.0, 12.0, 17.0)

    def test_partition(self):
        records = make_records(200, n_topics=5)
        split = corpus.split_in_domain(records, self.RATIOS, seed=13)
        got = sorted(r.pair_id for rows in split.splits().values() for r in rows)
        assert got == sorted(r.pair_id for r in records)

    def test_every_topic_spans_all_splits_at_nine_plus(self):
        records = make_records(9 * 4, n_topics=4)  # 9 records per topic
        split = corpus.split_in_domain(records, self.RATIOS, seed=13)
        for rows in split.splits().values():
            assert {r.topic for r in rows} == {r.topic for r in records}

    def test_ratio_accuracy_on_large_corpus(self):
        records = make_records(2000, n_topics=10)
        split = corpus.split_in_domain(records, self.RATIOS, seed=13)
        n = len(records)
        assert abs(len(split.train) / n - 0.71) < 0.01
        assert abs(len(split.dev) / n - 0.12) < 0.01
        assert abs(len(split.test) / n - 0.17) < 0.01

    def test_seed_determinism(self):
        records = make_records(100, n_topics=5)
        a = corpus.split_in_domain(records, self.RATIOS, seed=13)
        b = corpus.split_in_domain(records, self.RATIOS, seed=13)
        assert [r.pair_id for r in a.train] == [r.pair_id for r in b.train]
        c = corpus.split_in_domain(records, self.RATIOS, seed=7)
        assert [r.pair_id for r in a.train] != [r.pair_id for r in c.train]

    def test_bad_ratios(self):
        with pytest.raises(BadRatios):
            corpus.split_in_domain(make_records(10), (50.0, 30.0, 30.0), seed=13)

    @settings(max_examples=60, deadline=None)
    @given(
        sizes=st.lists(st.integers(min_value=1, max_value=40), min_size=1, max_size=8),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_split_properties(self, sizes, seed):
        records = []
        start = 0
        for t, size in enumerate(sizes):
            batch = make_records(size, n_topics=1, start_id=start)
            records.extend(
                corpus.ArgKPRecord(f"topic {t}", r.argument, r.key_point,
                                   r.stance, r.label, r.pair_id)
                for r in batch
            )
            start += size
        split = corpus.split_in_domain(records, self.RATIOS, seed=seed)
        ids = sorted(r.pair_id for rows in split.splits().values() for r in rows)
        assert ids == sorted(r.pair_id for r in records)
        assert len(set(ids)) == len(ids)
        for t, size in enumerate(sizes):
            if size >= 9:
                for rows in split.splits().values():
                    assert any(r.topic == f"topic {t}" for r in rows)


class TestStatsAndManifests:
    def test_split_stats(self):
        records = make_records(40, n_topics=4, positive_every=4)
        split = corpus.split_in_domain(records, (50.0, 25.0, 25.0), seed=3)
        stats = corpus.split_stats(split)
        counts = stats.counts()
        assert sum(c.total for c in counts.values()) == 40
        assert sum(c.matching for c in counts.values()) == 10
        assert sum(c.non_matching for c in counts.values()) == 30
        assert abs(sum(stats.ratios) - 100.0) < 1e-9

    def test_manifest_round_trip(self, tmp_path):
        records = make_records(60, n_topics=5)
        split = corpus.split_in_domain(records, (70.0, 15.0, 15.0), seed=21)
        corpus.write_split_manifests(split, tmp_path / "splits")
        assert (tmp_path / "splits" / "train.ids").exists()
        rebuilt = corpus.read_split_manifests(records, tmp_path / "splits")
        for name in ("train", "dev", "test"):
            assert [r.pair_id for r in rebuilt.splits()[name]] == [
                r.pair_id for r in split.splits()[name]
            ]
        assert rebuilt.mode == split.mode and rebuilt.seed == split.seed

    def test_read_manifest_missing(self, tmp_path):
        with pytest.raises(CorpusFormatError):
            corpus.read_split_manifests([], tmp_path)
