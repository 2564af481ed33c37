"""Shared fixtures: a small sentiment schema and toy-corpus builders."""

from __future__ import annotations

import numpy as np
import pytest

from dptwin.corpus import Corpus, LabeledRecord, ToyCorpusSpec, generate_toy_corpus
from dptwin.schema import Attribute, AttributeSchema, PromptTemplate
from dptwin.tokenizer import Vocabulary

POSITIVE_WORDS = (
    "great", "wonderful", "superb", "delightful", "charming",
    "excellent", "lovely", "amazing", "brilliant", "fantastic",
)
NEGATIVE_WORDS = (
    "awful", "terrible", "dreadful", "boring", "dire",
    "lousy", "grim", "horrid", "poor", "dull",
)
NEUTRAL_WORDS = (
    "the", "movie", "was", "plot", "and", "acting", "scene",
    "story", "film", "it", "really", "very", "with", "about", "one",
)
CANARY = "zq7 vexil brant"


@pytest.fixture(scope="session")
def sentiment_schema() -> AttributeSchema:
    return AttributeSchema((
        Attribute(
            "sentiment",
            ("positive", "negative"),
            {"positive": "positive", "negative": "negative"},
        ),
    ))


@pytest.fixture(scope="session")
def sentiment_template() -> PromptTemplate:
    return PromptTemplate("Write a {sentiment} review:")


@pytest.fixture(scope="session")
def two_attr_schema() -> AttributeSchema:
    return AttributeSchema((
        Attribute(
            "sentiment",
            ("positive", "negative"),
            {"positive": "positive", "negative": "negative"},
        ),
        Attribute(
            "category",
            ("books", "dvd", "electronics", "kitchen"),
            {
                "books": "a book",
                "dvd": "a dvd",
                "electronics": "an electronics product",
                "kitchen": "a kitchen product",
            },
        ),
    ))


@pytest.fixture(scope="session")
def two_attr_template() -> PromptTemplate:
    return PromptTemplate("Write a {sentiment} review about {category}:")


def make_toy_spec(
    schema: AttributeSchema,
    records_per_class: int,
    seed: int = 0,
    canaries: tuple[tuple[str, int], ...] = (),
    length_range: tuple[int, int] = (8, 14),
    public_records: int | None = None,
) -> ToyCorpusSpec:
    return ToyCorpusSpec(
        schema=schema,
        lexicons={"sentiment": {"positive": POSITIVE_WORDS, "negative": NEGATIVE_WORDS}},
        neutral=NEUTRAL_WORDS,
        records_per_class=records_per_class,
        length_range=length_range,
        canaries=canaries,
        seed=seed,
        public_records=public_records,
    )


@pytest.fixture(scope="session")
def small_toy_corpora(sentiment_schema):
    spec = make_toy_spec(sentiment_schema, records_per_class=50, seed=7, public_records=60)
    return generate_toy_corpus(spec)


@pytest.fixture(scope="session")
def tiny_vocab() -> Vocabulary:
    return Vocabulary.from_list(["a", "b", "c", "d", "e", "f", "g"])


def make_corpus(texts_labels, schema, role="train") -> Corpus:
    records = tuple(
        LabeledRecord(text=t, attrs={"sentiment": lab}) for t, lab in texts_labels
    )
    return Corpus(records=records, schema=schema, role=role)


def random_text(rng: np.random.Generator, words, lo=3, hi=12) -> str:
    n = int(rng.integers(lo, hi + 1))
    return " ".join(words[rng.integers(len(words))] for _ in range(n))


def pytest_terminal_summary(terminalreporter):
    # acceptance pass/fail lines are captured during the run; repeat them here
    # where pytest does not capture output
    try:
        from test_acceptance import ACCEPTANCE_LINES
    except ImportError:
        return
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES,
                           key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
