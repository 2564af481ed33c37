"""End-to-end training orchestration and twin-corpus generation."""

import numpy as np
import pytest

from dptwin.corpus import generate_toy_corpus
from dptwin.model import LossConfig, ModelConfig, SamplerConfig
from dptwin.synthesis import (
    GenerationPlan,
    SynthesisError,
    TrainPlan,
    _encode_pair,
    generate,
    largest_remainder_counts,
    train,
)
from dptwin.tokenizer import BOS_ID, EOS_ID, Vocabulary

from conftest import make_corpus, make_toy_spec

TINY_MODEL = ModelConfig(vocab_size=8, embed_dim=8, hidden_dim=12, context_len=24)


def tiny_plan(**kw):
    base = dict(
        pretrain_epochs=1,
        finetune_epochs=2,
        epsilon=8.0,
        batch_size=20,
        model=TINY_MODEL,
        loss=LossConfig(lam=0.2, wrong_cap_per_token=10.0),
        master_seed=0,
    )
    base.update(kw)
    return TrainPlan(**base)


@pytest.fixture(scope="module")
def tiny_corpora(sentiment_schema):
    spec = make_toy_spec(sentiment_schema, records_per_class=20, seed=3,
                         length_range=(5, 9), public_records=30)
    return generate_toy_corpus(spec)


class TestLargestRemainder:
    def test_rounding(self):
        assert largest_remainder_counts([0.33, 0.33, 0.34], 10) == [3, 3, 4]

    def test_exact_split(self):
        assert largest_remainder_counts([0.5, 0.5], 100) == [50, 50]

    def test_total_preserved(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(2, 6))
            p = rng.dirichlet(np.ones(k))
            total = int(rng.integers(0, 200))
            counts = largest_remainder_counts(list(p), total)
            assert sum(counts) == total
            assert all(c >= 0 for c in counts)
            # each count within 1 of the exact share
            assert all(abs(c - pi * total) < 1.0 for c, pi in zip(counts, p))

    def test_zero_total(self):
        assert largest_remainder_counts([0.5, 0.5], 0) == [0, 0]


class TestEncodePair:
    def test_layout(self):
        vocab = Vocabulary.from_list(["a", "b", "c", "x", "y"])
        ids, text_start = _encode_pair(vocab, "a b", "x y", 32)
        assert ids[0] == BOS_ID and ids[-1] == EOS_ID
        assert text_start == 3  # BOS + 2 prompt tokens
        assert vocab.decode(ids) == "a b x y"

    def test_truncation_keeps_eos(self):
        vocab = Vocabulary.from_list(["a", "b", "c", "x", "y"])
        ids, _ = _encode_pair(vocab, "a b c", "x y x y x y x y", 8)
        assert len(ids) == 8
        assert ids[-1] == EOS_ID


class TestTrain:
    def test_dp_run_fills_ledger_within_budget(self, tiny_corpora, sentiment_schema,
                                               sentiment_template):
        private, public = tiny_corpora
        model, ledger = train(tiny_plan(), public, private, sentiment_template,
                              sentiment_schema)
        assert len(ledger.entries) == 1
        sigma, q, steps = ledger.entries[0]
        assert sigma > 0
        assert q == pytest.approx(20 / 40)
        assert steps == 2 * 2  # 2 epochs x round(40/20) steps
        delta = 1.0 / (2 * len(private))
        assert ledger.spent_epsilon(delta) <= 8.0
        assert np.all(np.isfinite(model.theta))

    def test_epsilon_none_is_nonprivate(self, tiny_corpora, sentiment_schema,
                                        sentiment_template):
        private, public = tiny_corpora
        _, ledger = train(tiny_plan(epsilon=None, nonprivate_finetune_epochs=1),
                          public, private, sentiment_template, sentiment_schema)
        assert ledger.entries == []
        assert ledger.spent_epsilon(1e-4) == 0.0

    def test_zero_finetune_epochs_spends_nothing(self, tiny_corpora, sentiment_schema,
                                                 sentiment_template):
        private, public = tiny_corpora
        _, ledger = train(tiny_plan(finetune_epochs=0), public, private,
                          sentiment_template, sentiment_schema)
        assert ledger.entries == []

    def test_stricter_budget_uses_more_noise(self, tiny_corpora, sentiment_schema,
                                             sentiment_template):
        private, public = tiny_corpora
        _, l3 = train(tiny_plan(epsilon=3.0), public, private, sentiment_template,
                      sentiment_schema)
        _, l8 = train(tiny_plan(epsilon=8.0), public, private, sentiment_template,
                      sentiment_schema)
        assert l3.entries[0][0] > l8.entries[0][0]

    def test_deterministic(self, tiny_corpora, sentiment_schema, sentiment_template):
        private, public = tiny_corpora
        a, _ = train(tiny_plan(), public, private, sentiment_template, sentiment_schema)
        b, _ = train(tiny_plan(), public, private, sentiment_template, sentiment_schema)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_seed_changes_result(self, tiny_corpora, sentiment_schema, sentiment_template):
        private, public = tiny_corpora
        a, _ = train(tiny_plan(master_seed=0), public, private, sentiment_template,
                     sentiment_schema)
        b, _ = train(tiny_plan(master_seed=1), public, private, sentiment_template,
                     sentiment_schema)
        assert not np.array_equal(a.theta, b.theta)

    def test_prompt_words_enter_vocabulary(self, tiny_corpora, sentiment_schema,
                                           sentiment_template):
        private, public = tiny_corpora
        model, _ = train(tiny_plan(finetune_epochs=0, pretrain_epochs=0), public,
                         private, sentiment_template, sentiment_schema)
        for w in ("write", "positive", "negative", "review:"):
            assert w in model.vocab.tokens

    def test_empty_private_rejected(self, tiny_corpora, sentiment_schema,
                                    sentiment_template):
        from dptwin.corpus import Corpus
        _, public = tiny_corpora
        empty = Corpus(records=(), schema=sentiment_schema)
        with pytest.raises(SynthesisError):
            train(tiny_plan(), public, empty, sentiment_template, sentiment_schema)

    def test_partial_labels_rejected(self, tiny_corpora, two_attr_schema,
                                     two_attr_template):
        from dptwin.corpus import Corpus, LabeledRecord
        _, public_src = tiny_corpora
        public = Corpus(records=public_src.records, schema=two_attr_schema)
        private = Corpus(
            records=(LabeledRecord(text="ok fine", attrs={"sentiment": "positive"}),),
            schema=two_attr_schema,
        )
        with pytest.raises(SynthesisError, match="full attribute"):
            train(tiny_plan(), public, private, two_attr_template, two_attr_schema)

    def test_plan_validation(self):
        with pytest.raises(SynthesisError):
            TrainPlan(epsilon=-1.0)
        with pytest.raises(SynthesisError):
            TrainPlan(pretrain_epochs=-1)
        with pytest.raises(SynthesisError):
            GenerationPlan(total=-5)
        with pytest.raises(SynthesisError):
            GenerationPlan(total=10, proportions={"positive": 0.7, "negative": 0.2})


@pytest.fixture(scope="module")
def tiny_model(tiny_corpora, sentiment_schema, sentiment_template):
    private, public = tiny_corpora
    model, _ = train(tiny_plan(), public, private, sentiment_template, sentiment_schema)
    return model


class TestGenerate:
    def test_counts_exact(self, tiny_model, sentiment_schema, sentiment_template):
        plan = GenerationPlan(total=20, proportions={"positive": 0.5, "negative": 0.5},
                              sampler=SamplerConfig(nucleus_p=0.8), seed=0)
        corpus, meta = generate(tiny_model, plan, sentiment_template, sentiment_schema)
        assert len(corpus) == 20
        labels = corpus.labels("sentiment")
        assert labels.count("positive") == 10 and labels.count("negative") == 10
        assert meta["counts_per_class"] == {"positive": 10, "negative": 10}
        assert corpus.role == "synthetic"

    def test_default_proportions_uniform(self, tiny_model, sentiment_schema,
                                         sentiment_template):
        corpus, meta = generate(tiny_model, GenerationPlan(total=10, seed=1),
                                sentiment_template, sentiment_schema)
        assert meta["counts_per_class"] == {"positive": 5, "negative": 5}

    def test_zero_total(self, tiny_model, sentiment_schema, sentiment_template):
        corpus, meta = generate(tiny_model, GenerationPlan(total=0),
                                sentiment_template, sentiment_schema)
        assert len(corpus) == 0

    def test_deterministic(self, tiny_model, sentiment_schema, sentiment_template):
        plan = GenerationPlan(total=8, seed=5)
        a, _ = generate(tiny_model, plan, sentiment_template, sentiment_schema)
        b, _ = generate(tiny_model, plan, sentiment_template, sentiment_schema)
        assert a.records == b.records

    def test_seed_sensitivity(self, tiny_model, sentiment_schema, sentiment_template):
        a, _ = generate(tiny_model, GenerationPlan(total=8, seed=5),
                        sentiment_template, sentiment_schema)
        b, _ = generate(tiny_model, GenerationPlan(total=8, seed=6),
                        sentiment_template, sentiment_schema)
        assert a.records != b.records

    def test_min_length_respected_or_flagged(self, tiny_model, sentiment_schema,
                                             sentiment_template):
        plan = GenerationPlan(total=12, min_length=3, seed=2)
        corpus, meta = generate(tiny_model, plan, sentiment_template, sentiment_schema)
        for i, text in enumerate(corpus.texts()):
            if i not in meta["flagged_records"]:
                assert len(text.split()) >= 3

    def test_max_length_cap(self, tiny_model, sentiment_schema, sentiment_template):
        plan = GenerationPlan(total=10, max_length=4, min_length=1, seed=3)
        corpus, _ = generate(tiny_model, plan, sentiment_template, sentiment_schema)
        for text in corpus.texts():
            assert len(text.split()) <= 4

    def test_unknown_proportion_key_rejected(self, tiny_model, sentiment_schema,
                                             sentiment_template):
        plan = GenerationPlan(total=4, proportions={"positive": 0.5, "maybe": 0.5})
        with pytest.raises(SynthesisError, match="unknown"):
            generate(tiny_model, plan, sentiment_template, sentiment_schema)

    def test_metadata_fields(self, tiny_model, sentiment_schema, sentiment_template):
        plan = GenerationPlan(total=6, seed=9, sampler=SamplerConfig(nucleus_p=0.7))
        _, meta = generate(tiny_model, plan, sentiment_template, sentiment_schema)
        assert meta["seed"] == 9
        assert meta["nucleus_p"] == 0.7
        assert meta["total"] == 6
