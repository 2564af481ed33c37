"""Whitespace word-level tokenizer with BOS/EOS/UNK/PAD specials."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

__all__ = ["Vocabulary", "TokenizerError", "BOS_ID", "EOS_ID", "UNK_ID", "PAD_ID"]

BOS_ID, EOS_ID, UNK_ID, PAD_ID = 0, 1, 2, 3
_SPECIAL_TOKENS = ("<bos>", "<eos>", "<unk>", "<pad>")
N_SPECIALS = 4


class TokenizerError(ValueError):
    pass


def normalize(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class Vocabulary:
    """Bijection between learned word tokens and ids 4..size-1; ids 0..3 are special."""

    tokens: tuple[str, ...]  # learned tokens only, id = N_SPECIALS + index

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise TokenizerError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_ids", {t: N_SPECIALS + i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return N_SPECIALS + len(self.tokens)

    @classmethod
    def build(cls, corpora: list, max_size: int = 1024,
              extra_texts: list[str] | None = None) -> "Vocabulary":
        """Most frequent whitespace tokens, ties broken lexicographically.

        ``extra_texts`` (e.g. rendered instruction prompts, which are public)
        are counted too so that every instruction token is representable.
        """
        if not corpora and not extra_texts:
            raise TokenizerError("no corpora given")
        counts: Counter[str] = Counter()
        for corpus in corpora:
            for text in corpus.texts():
                counts.update(normalize(text))
        for text in extra_texts or ():
            counts.update(normalize(text))
        if not counts:
            raise TokenizerError("empty text universe; cannot build vocabulary")
        if max_size <= N_SPECIALS:
            raise TokenizerError(f"max_size must exceed {N_SPECIALS}")
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(tokens=tuple(t for t, _ in ranked[: max_size - N_SPECIALS]))

    def encode(self, text: str, max_len: int | None = None) -> np.ndarray:
        """BOS + word ids (unknown -> UNK) + EOS, truncated with EOS preserved."""
        ids = [BOS_ID]
        ids.extend(self._ids.get(t, UNK_ID) for t in normalize(text))
        ids.append(EOS_ID)
        if max_len is not None and len(ids) > max_len:
            ids = ids[: max_len - 1] + [EOS_ID]
        return np.asarray(ids, dtype=np.int64)

    def encode_words(self, text: str) -> np.ndarray:
        """Word ids only, no BOS/EOS (for building concatenated sequences)."""
        return np.asarray(
            [self._ids.get(t, UNK_ID) for t in normalize(text)], dtype=np.int64
        )

    def decode(self, ids) -> str:
        """Drop BOS/EOS/PAD, keep the literal unknown marker, join with spaces."""
        out = []
        for i in ids:
            i = int(i)
            if i < 0 or i >= self.size:
                raise TokenizerError(f"token id {i} out of range for vocabulary of size {self.size}")
            if i in (BOS_ID, EOS_ID, PAD_ID):
                continue
            out.append(_SPECIAL_TOKENS[i] if i < N_SPECIALS else self.tokens[i - N_SPECIALS])
        return " ".join(out)

    def to_list(self) -> list[str]:
        return list(self.tokens)

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocabulary":
        return cls(tokens=tuple(tokens))
