"""Labeled text corpora: JSONL ingest, toy generation, splitting, serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .schema import AttributeSchema, SchemaError

__all__ = [
    "LabeledRecord",
    "Corpus",
    "ToyCorpusSpec",
    "CorpusError",
    "load_jsonl",
    "write_jsonl",
    "split",
    "generate_toy_corpus",
]


class CorpusError(ValueError):
    """Raised on malformed corpus files or invalid records."""


@dataclass(frozen=True)
class LabeledRecord:
    """One text with its attribute assignment."""

    text: str
    attrs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError("record text is empty after trimming")

    def validate(self, schema: AttributeSchema) -> None:
        schema.validate_assignment(self.attrs, partial=True)


@dataclass(frozen=True)
class Corpus:
    """Ordered sequence of labeled records under a governing schema."""

    records: tuple[LabeledRecord, ...]
    schema: AttributeSchema
    role: str = "train"  # train | test | synthetic

    def __post_init__(self):
        if self.role not in ("train", "test", "synthetic"):
            raise CorpusError(f"unknown corpus role {self.role!r}")
        for i, rec in enumerate(self.records):
            try:
                rec.validate(self.schema)
            except SchemaError as exc:
                raise CorpusError(f"record {i}: {exc}") from exc

    def __len__(self) -> int:
        return len(self.records)

    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    def labels(self, attribute: str) -> list[str]:
        return [r.attrs[attribute] for r in self.records]

    def class_key(self, record: LabeledRecord) -> tuple[str, ...]:
        return tuple(record.attrs.get(n, "") for n in self.schema.names)


def load_jsonl(path: str | Path, schema: AttributeSchema, role: str = "train") -> Corpus:
    """Parse one JSON record object per non-blank line, in file order."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(obj, dict) or "text" not in obj:
                raise CorpusError(f"{path}:{lineno}: record object must have a 'text' key")
            try:
                rec = LabeledRecord(text=obj["text"], attrs=dict(obj.get("attrs", {})))
                rec.validate(schema)
            except (CorpusError, SchemaError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    return Corpus(records=tuple(records), schema=schema, role=role)


def write_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Write one JSON object per record; round-trips exactly through load_jsonl."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for rec in corpus.records:
                fh.write(json.dumps({"text": rec.text, "attrs": rec.attrs}, sort_keys=True))
                fh.write("\n")
    except OSError as exc:
        raise CorpusError(f"cannot write corpus to {path}: {exc}") from exc


def split(corpus: Corpus, train_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Stratified disjoint split with sizes floor(n*f) and n - floor(n*f)."""
    if not 0.0 < train_fraction < 1.0:
        raise CorpusError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(corpus) == 0:
        raise CorpusError("cannot split an empty corpus")
    n = len(corpus)
    n_train = math.floor(n * train_fraction)
    by_class: dict[tuple[str, ...], list[int]] = {}
    for i, rec in enumerate(corpus.records):
        by_class.setdefault(corpus.class_key(rec), []).append(i)
    rng = np.random.default_rng(seed)
    # per-class floor allocation, then largest fractional remainder to hit n_train
    keys = sorted(by_class)
    floors, rems = {}, []
    for k in keys:
        t = train_fraction * len(by_class[k])
        floors[k] = math.floor(t)
        rems.append((t - floors[k], k))
    short = n_train - sum(floors.values())
    for _, k in sorted(rems, key=lambda x: (-x[0], x[1]))[: max(short, 0)]:
        floors[k] += 1
    train_idx: list[int] = []
    for k in keys:
        idx = np.array(by_class[k])
        rng.shuffle(idx)
        train_idx.extend(idx[: floors[k]].tolist())
    train_set = set(train_idx)
    train_recs = tuple(corpus.records[i] for i in sorted(train_set))
    test_recs = tuple(r for i, r in enumerate(corpus.records) if i not in train_set)
    return (
        Corpus(records=train_recs, schema=corpus.schema, role="train"),
        Corpus(records=test_recs, schema=corpus.schema, role="test"),
    )


@dataclass(frozen=True)
class ToyCorpusSpec:
    """Recipe for a synthetic labeled corpus with planted canaries.

    ``lexicons`` maps attribute name -> value -> signature word list; signature
    lexicons of distinct values must be pairwise disjoint.  ``neutral`` is the
    shared filler lexicon.  ``canaries`` is a list of (phrase, insertion count);
    canary words must not occur in any lexicon.
    """

    schema: AttributeSchema
    lexicons: dict[str, dict[str, tuple[str, ...]]]
    neutral: tuple[str, ...]
    records_per_class: int
    length_range: tuple[int, int] = (8, 16)
    canaries: tuple[tuple[str, int], ...] = ()
    seed: int = 0
    signature_fraction: float = 0.7
    public_records: int | None = None  # default: same total size as private

    def __post_init__(self):
        all_sig: list[str] = []
        for attr in self.schema.attributes:
            table = self.lexicons.get(attr.name)
            if not table or set(table) != set(attr.values):
                raise CorpusError(f"lexicons must cover every value of {attr.name!r}")
            for v in attr.values:
                if not table[v]:
                    raise CorpusError(f"empty lexicon for {attr.name}={v}")
                all_sig.extend(table[v])
        if len(set(all_sig)) != len(all_sig):
            raise CorpusError("signature lexicons are not pairwise disjoint")
        lex_words = set(all_sig) | set(self.neutral)
        for phrase, count in self.canaries:
            if count < 0:
                raise CorpusError("canary insertion count must be >= 0")
            for w in phrase.split():
                if w in lex_words:
                    raise CorpusError(f"canary word {w!r} collides with a lexicon word")
        if not self.neutral:
            raise CorpusError("neutral lexicon is empty")
        if self.records_per_class < 1:
            raise CorpusError("records_per_class must be >= 1")
        lo, hi = self.length_range
        if not (1 <= lo <= hi):
            raise CorpusError(f"bad length range {self.length_range}")
        if not 0.6 <= self.signature_fraction <= 1.0:
            raise CorpusError("signature_fraction must be in [0.6, 1.0]")


def _toy_sentence(
    rng: np.random.Generator,
    sig_words: list[str],
    neutral: tuple[str, ...],
    length_range: tuple[int, int],
    signature_fraction: float,
) -> str:
    lo, hi = length_range
    length = int(rng.integers(lo, hi + 1))
    n_sig = max(1, int(math.ceil(signature_fraction * length)))
    n_sig = min(n_sig, length)
    words = [sig_words[rng.integers(len(sig_words))] for _ in range(n_sig)]
    words += [neutral[rng.integers(len(neutral))] for _ in range(length - n_sig)]
    perm = rng.permutation(length)
    return " ".join(words[i] for i in perm)


def generate_toy_corpus(spec: ToyCorpusSpec) -> tuple[Corpus, Corpus]:
    """Build the (private, public) toy corpora, fully determined by the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    schema = spec.schema
    assignments = schema.assignments()
    texts: list[str] = []
    attrs_list: list[dict[str, str]] = []
    for assignment in assignments:
        sig_words: list[str] = []
        for name, value in assignment.items():
            sig_words.extend(spec.lexicons[name][value])
        for _ in range(spec.records_per_class):
            texts.append(
                _toy_sentence(rng, sig_words, spec.neutral, spec.length_range, spec.signature_fraction)
            )
            attrs_list.append(dict(assignment))
    n = len(texts)
    for phrase, count in spec.canaries:
        if count > n:
            raise CorpusError(
                f"canary insertion count {count} exceeds record count {n}"
            )
        chosen = rng.choice(n, size=count, replace=False)
        for i in chosen:
            tokens = texts[i].split()
            pos = int(rng.integers(0, len(tokens) + 1))
            texts[i] = " ".join(tokens[:pos] + phrase.split() + tokens[pos:])
    private = Corpus(
        records=tuple(LabeledRecord(text=t, attrs=a) for t, a in zip(texts, attrs_list)),
        schema=schema,
        role="train",
    )
    n_public = spec.public_records if spec.public_records is not None else n
    pub_records = []
    for _ in range(n_public):
        lo, hi = spec.length_range
        length = int(rng.integers(lo, hi + 1))
        words = [spec.neutral[rng.integers(len(spec.neutral))] for _ in range(length)]
        pub_records.append(LabeledRecord(text=" ".join(words), attrs={}))
    public = Corpus(records=tuple(pub_records), schema=schema, role="train")
    return private, public
