"""Audits for synthetic corpora: duplicates, canaries, utility, distribution."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import LinearClassifier, dp_train_tfidf_classifier, train_tfidf_classifier
from .corpus import Corpus
from .accountant import PrivacySpec
from .dp_optim import DpOptimConfig

__all__ = [
    "trigram_set",
    "is_duplicate",
    "duplicate_count",
    "duplicate_pairs",
    "canary_extraction",
    "label_fidelity",
    "utility_gap",
    "dp_classifier_baseline",
    "distribution_similarity",
    "AuditReport",
]


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def trigram_set(text: str) -> frozenset[tuple[str, str, str]]:
    """Set of word-level trigrams of the normalized text; empty below 3 tokens."""
    toks = _tokens(text)
    return frozenset(tuple(toks[i : i + 3]) for i in range(len(toks) - 2))


def is_duplicate(a: str, b: str) -> bool:
    """Trigram-overlap near-duplicate test:
    |g3(a) & g3(b)| >= min(|g3(a)|, |g3(b)|) / 2, both sets non-empty."""
    ga, gb = trigram_set(a), trigram_set(b)
    if not ga or not gb:
        return False
    return len(ga & gb) * 2 >= min(len(ga), len(gb))


def duplicate_pairs(synthetic: Corpus, private_train: Corpus) -> list[tuple[int, int]]:
    """All (synthetic index, train index) pairs passing is_duplicate.

    Uses an inverted trigram index over the training corpus to prune; the pair
    set equals the brute-force pairwise scan.
    """
    train_grams = [trigram_set(t) for t in private_train.texts()]
    index: dict[tuple[str, str, str], list[int]] = {}
    for j, grams in enumerate(train_grams):
        for g in grams:
            index.setdefault(g, []).append(j)
    pairs: list[tuple[int, int]] = []
    for i, text in enumerate(synthetic.texts()):
        gi = trigram_set(text)
        if not gi:
            continue
        overlap: dict[int, int] = {}
        for g in gi:
            for j in index.get(g, ()):
                overlap[j] = overlap.get(j, 0) + 1
        for j, cnt in overlap.items():
            gj = train_grams[j]
            if gj and cnt * 2 >= min(len(gi), len(gj)):
                pairs.append((i, j))
    return sorted(pairs)


def duplicate_count(synthetic: Corpus, private_train: Corpus) -> int:
    return len(duplicate_pairs(synthetic, private_train))


def canary_extraction(synthetic: Corpus, canaries: list[str]) -> dict[str, int]:
    """Per canary: number of synthetic records containing it as a verbatim
    token subsequence."""
    counts = {c: 0 for c in canaries}
    token_lists = [_tokens(t) for t in synthetic.texts()]
    for canary in canaries:
        needle = _tokens(canary)
        m = len(needle)
        if m == 0:
            continue
        for toks in token_lists:
            if any(toks[i : i + m] == needle for i in range(len(toks) - m + 1)):
                counts[canary] += 1
    return counts


def label_fidelity(synthetic: Corpus, reference: LinearClassifier, attribute: str) -> float:
    """Fraction of synthetic records whose prompted label the reference
    classifier (trained on real data) agrees with."""
    if len(synthetic) == 0:
        raise ValueError("empty synthetic corpus")
    pred = reference.predict(synthetic.texts())
    truth = synthetic.labels(attribute)
    return float(np.mean([p == t for p, t in zip(pred, truth)]))


def utility_gap(
    real_train: Corpus, synthetic_train: Corpus, test: Corpus, attribute: str
) -> tuple[float, float]:
    """Accuracies on the same real test corpus of classifiers trained on the
    real and on the synthetic corpus."""
    clf_real = train_tfidf_classifier(real_train, attribute)
    clf_synth = train_tfidf_classifier(synthetic_train, attribute)
    return clf_real.accuracy(test, attribute), clf_synth.accuracy(test, attribute)


def dp_classifier_baseline(
    real_train: Corpus,
    test: Corpus,
    attribute: str,
    spec: PrivacySpec | None,
    optim: DpOptimConfig | None = None,
    epochs: int = 200,
) -> float:
    """Accuracy of the tf-idf linear model trained on real data with the same
    clip + noise machinery (sigma = 0 when spec is None)."""
    optim = optim or DpOptimConfig(clip_norm=1.0, lr=0.05)
    clf, _ = dp_train_tfidf_classifier(real_train, attribute, spec, optim, epochs=epochs)
    return clf.accuracy(test, attribute)


def _ngram_distribution(texts: list[str]) -> dict:
    counts: dict = {}
    for text in texts:
        toks = _tokens(text)
        for t in toks:
            counts[("u", t)] = counts.get(("u", t), 0) + 1
        for i in range(len(toks) - 1):
            key = ("b", toks[i], toks[i + 1])
            counts[key] = counts.get(key, 0) + 1
    return counts


def distribution_similarity(a: Corpus, b: Corpus, smoothing: float = 1e-10) -> float:
    """1 - JS divergence (base 2) between smoothed unigram+bigram mixtures."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("corpora must be non-empty")
    ca, cb = _ngram_distribution(a.texts()), _ngram_distribution(b.texts())
    support = sorted(set(ca) | set(cb))
    pa = np.array([ca.get(k, 0) for k in support], dtype=float) + smoothing
    pb = np.array([cb.get(k, 0) for k in support], dtype=float) + smoothing
    # equal weight to the unigram and bigram halves of the mixture
    is_uni = np.array([k[0] == "u" for k in support])
    for mask in (is_uni, ~is_uni):
        if pa[mask].sum() > 0:
            pa[mask] *= 0.5 / pa[mask].sum()
        if pb[mask].sum() > 0:
            pb[mask] *= 0.5 / pb[mask].sum()
    pa /= pa.sum()
    pb /= pb.sum()
    m = 0.5 * (pa + pb)

    def kl(p, q):
        mask = p > 0
        return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))

    js = 0.5 * kl(pa, m) + 0.5 * kl(pb, m)
    return 1.0 - min(max(js, 0.0), 1.0)


@dataclass
class AuditReport:
    duplicate_pair_count: int
    duplicate_distinct_synthetic: int
    canary_counts: dict[str, int]
    acc_real: float
    acc_synthetic: float
    acc_dp_real: float | None
    label_fidelity_rate: float
    divergence_score: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for acc in (self.acc_real, self.acc_synthetic, self.label_fidelity_rate):
            if not 0.0 <= acc <= 1.0:
                raise ValueError("accuracies must lie in [0, 1]")
        if self.duplicate_pair_count < 0 or any(v < 0 for v in self.canary_counts.values()):
            raise ValueError("counts must be >= 0")

    def to_json(self) -> str:
        obj = {
            "duplicate_pair_count": self.duplicate_pair_count,
            "duplicate_distinct_synthetic": self.duplicate_distinct_synthetic,
            "canary_counts": self.canary_counts,
            "acc_real": self.acc_real,
            "acc_synthetic": self.acc_synthetic,
            "acc_dp_real": self.acc_dp_real,
            "label_fidelity_rate": self.label_fidelity_rate,
            "divergence_score": self.divergence_score,
            "metadata": self.metadata,
        }
        return json.dumps(obj, indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("duplicate pairs", str(self.duplicate_pair_count)),
            ("distinct duplicated synthetic records", str(self.duplicate_distinct_synthetic)),
            ("canary extractions", ", ".join(f"{k!r}: {v}" for k, v in self.canary_counts.items()) or "none"),
            ("accuracy (trained on real)", f"{self.acc_real:.4f}"),
            ("accuracy (trained on synthetic)", f"{self.acc_synthetic:.4f}"),
            ("accuracy (DP-trained on real)",
             "n/a" if self.acc_dp_real is None else f"{self.acc_dp_real:.4f}"),
            ("label fidelity", f"{self.label_fidelity_rate:.4f}"),
            ("distribution similarity", f"{self.divergence_score:.4f}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)
