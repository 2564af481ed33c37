"""Corpus loading, serialization, splitting, and toy generation."""

import json

import numpy as np
import pytest

from dptwin.corpus import (
    Corpus,
    CorpusError,
    LabeledRecord,
    ToyCorpusSpec,
    generate_toy_corpus,
    load_jsonl,
    split,
    write_jsonl,
)

from conftest import CANARY, NEUTRAL_WORDS, make_corpus, make_toy_spec


class TestLabeledRecord:
    def test_empty_text_rejected(self):
        with pytest.raises(CorpusError):
            LabeledRecord(text="   ")

    def test_unknown_attribute_rejected(self, sentiment_schema):
        with pytest.raises(CorpusError):
            Corpus(
                records=(LabeledRecord(text="ok", attrs={"mood": "happy"}),),
                schema=sentiment_schema,
            )

    def test_unknown_value_rejected(self, sentiment_schema):
        with pytest.raises(CorpusError):
            Corpus(
                records=(LabeledRecord(text="ok", attrs={"sentiment": "happy"}),),
                schema=sentiment_schema,
            )

    def test_partial_attrs_allowed(self, two_attr_schema):
        c = Corpus(
            records=(LabeledRecord(text="ok", attrs={"sentiment": "positive"}),),
            schema=two_attr_schema,
        )
        assert len(c) == 1


class TestJsonl:
    def test_load_two_lines(self, tmp_path, sentiment_schema):
        p = tmp_path / "c.jsonl"
        p.write_text(
            '{"text": "a b", "attrs": {"sentiment": "positive"}}\n'
            '{"text": "c d", "attrs": {"sentiment": "negative"}}\n'
        )
        c = load_jsonl(p, sentiment_schema)
        assert len(c) == 2
        assert c.records[0].text == "a b"
        assert c.labels("sentiment") == ["positive", "negative"]

    def test_empty_file(self, tmp_path, sentiment_schema):
        p = tmp_path / "c.jsonl"
        p.write_text("")
        assert len(load_jsonl(p, sentiment_schema)) == 0

    def test_malformed_line_names_line_number(self, tmp_path, sentiment_schema):
        p = tmp_path / "c.jsonl"
        p.write_text('{"text": "ok", "attrs": {}}\nnot json\n')
        with pytest.raises(CorpusError, match=r":2:"):
            load_jsonl(p, sentiment_schema)

    def test_bad_value_names_line_number(self, tmp_path, sentiment_schema):
        p = tmp_path / "c.jsonl"
        p.write_text('{"text": "ok", "attrs": {"sentiment": "happy"}}\n')
        with pytest.raises(CorpusError, match=r":1:.*happy"):
            load_jsonl(p, sentiment_schema)

    def test_round_trip(self, tmp_path, sentiment_schema):
        c = make_corpus(
            [("a b c", "positive"), ("d e", "negative"), ("f", "positive")],
            sentiment_schema,
        )
        p = tmp_path / "c.jsonl"
        write_jsonl(c, p)
        again = load_jsonl(p, sentiment_schema)
        assert again.records == c.records

    def test_newline_in_text_stays_one_line(self, tmp_path, sentiment_schema):
        c = make_corpus([("line one\nline two", "positive")], sentiment_schema)
        p = tmp_path / "c.jsonl"
        write_jsonl(c, p)
        assert len(p.read_text().strip().splitlines()) == 1
        assert load_jsonl(p, sentiment_schema).records[0].text == "line one\nline two"

    def test_zero_records_writes_empty_file(self, tmp_path, sentiment_schema):
        c = Corpus(records=(), schema=sentiment_schema)
        p = tmp_path / "c.jsonl"
        write_jsonl(c, p)
        assert p.read_text() == ""


class TestSplit:
    def test_sizes_and_disjoint(self, sentiment_schema):
        c = make_corpus([(f"w{i} x y", "positive") for i in range(6)]
                        + [(f"z{i} q r", "negative") for i in range(4)], sentiment_schema)
        tr, te = split(c, 0.5, seed=0)
        assert len(tr) == 5 and len(te) == 5
        assert set(tr.texts()).isdisjoint(te.texts())

    def test_stratified(self, sentiment_schema):
        c = make_corpus([(f"p{i} a", "positive") for i in range(8)]
                        + [(f"n{i} b", "negative") for i in range(2)], sentiment_schema)
        tr, _ = split(c, 0.5, seed=1)
        labels = tr.labels("sentiment")
        assert labels.count("positive") == 4
        assert labels.count("negative") == 1

    def test_deterministic(self, small_toy_corpora):
        private, _ = small_toy_corpora
        a = split(private, 0.8, seed=42)
        b = split(private, 0.8, seed=42)
        assert a[0].records == b[0].records and a[1].records == b[1].records

    def test_fraction_bounds(self, sentiment_schema):
        c = make_corpus([("a b", "positive"), ("c d", "negative")], sentiment_schema)
        for f in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(CorpusError):
                split(c, f, seed=0)

    def test_floor_sizes(self, sentiment_schema):
        c = make_corpus([(f"t{i} u", "positive") for i in range(7)], sentiment_schema)
        # single-class corpora are fine to split (stratification is a no-op)
        tr, te = split(c, 0.6, seed=0)
        assert len(tr) == 4 and len(te) == 3  # floor(7 * 0.6) = 4


class TestToyCorpus:
    def test_sizes(self, sentiment_schema):
        spec = make_toy_spec(sentiment_schema, records_per_class=25)
        private, public = generate_toy_corpus(spec)
        assert len(private) == 50
        assert len(public) == 50  # defaults to the private size

    def test_canary_inserted_exactly_count_times(self, sentiment_schema):
        spec = make_toy_spec(sentiment_schema, records_per_class=30,
                             canaries=((CANARY, 10),))
        private, public = generate_toy_corpus(spec)
        bearing = [t for t in private.texts() if CANARY in t]
        assert len(bearing) == 10
        assert not any(CANARY in t for t in public.texts())

    def test_canary_count_exceeding_records_errors(self, sentiment_schema):
        spec = make_toy_spec(sentiment_schema, records_per_class=2,
                             canaries=((CANARY, 10),))
        with pytest.raises(CorpusError):
            generate_toy_corpus(spec)

    def test_deterministic(self, sentiment_schema):
        spec = make_toy_spec(sentiment_schema, records_per_class=20, seed=5)
        a = generate_toy_corpus(spec)
        b = generate_toy_corpus(make_toy_spec(sentiment_schema, records_per_class=20, seed=5))
        assert a[0].records == b[0].records and a[1].records == b[1].records

    def test_different_seeds_differ(self, sentiment_schema):
        a = generate_toy_corpus(make_toy_spec(sentiment_schema, 20, seed=1))
        b = generate_toy_corpus(make_toy_spec(sentiment_schema, 20, seed=2))
        assert a[0].records != b[0].records

    def test_public_is_neutral_only(self, small_toy_corpora):
        _, public = small_toy_corpora
        neutral = set(NEUTRAL_WORDS)
        for t in public.texts():
            assert set(t.split()) <= neutral
        assert all(r.attrs == {} for r in public.records)

    def test_signature_share(self, sentiment_schema):
        spec = make_toy_spec(sentiment_schema, records_per_class=50)
        private, _ = generate_toy_corpus(spec)
        neutral = set(NEUTRAL_WORDS)
        for t in private.texts():
            toks = t.split()
            sig = sum(w not in neutral for w in toks)
            assert sig / len(toks) >= 0.6

    def test_lexicon_disjointness_enforced(self, sentiment_schema):
        with pytest.raises(CorpusError):
            ToyCorpusSpec(
                schema=sentiment_schema,
                lexicons={"sentiment": {"positive": ("same",), "negative": ("same",)}},
                neutral=("n",),
                records_per_class=5,
            )

    def test_canary_lexicon_collision_rejected(self, sentiment_schema):
        with pytest.raises(CorpusError):
            make_toy_spec(sentiment_schema, 5, canaries=(("the great", 1),))


def test_random_order_insensitive_class_key(sentiment_schema):
    c = make_corpus([("a b", "positive")], sentiment_schema)
    assert c.class_key(c.records[0]) == ("positive",)
