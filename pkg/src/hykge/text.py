"""Tokenizers, normalization and stopword handling shared across the pipeline."""

from __future__ import annotations

import unicodedata
from pathlib import Path
from typing import Iterable, Protocol

__all__ = [
    "Tokenizer",
    "WhitespaceTokenizer",
    "DictionarySegmenter",
    "normalize",
    "dedup_key",
    "is_valid_token",
    "load_stopwords",
]


class Tokenizer(Protocol):
    def __call__(self, text: str) -> list[str]: ...


def normalize(text: str) -> str:
    """NFC-normalize and trim."""
    return unicodedata.normalize("NFC", text).strip()


def dedup_key(text: str) -> str:
    # casefold is the identity for unicameral scripts such as Han
    return normalize(text).casefold()


def is_valid_token(token: str) -> bool:
    """A token survives filtering only if it carries at least one letter or digit."""
    return any(ch.isalnum() for ch in token)


class WhitespaceTokenizer:
    """Splits on runs of whitespace. Used for Latin text and in tests."""

    def __call__(self, text: str) -> list[str]:
        return text.split()


def _is_cjk(ch: str) -> bool:
    return unicodedata.east_asian_width(ch) in ("W", "F") and ch.isalnum()


class DictionarySegmenter:
    """Greedy forward maximum-matching segmenter.

    Runs of CJK characters are cut against the vocabulary, longest entry
    first; characters not covered by any entry become single-character
    tokens. Non-CJK text falls back to whitespace/punctuation splitting,
    so mixed Chinese/Latin input segments sensibly.
    """

    def __init__(self, vocabulary: Iterable[str], max_len: int | None = None) -> None:
        self.vocabulary = {normalize(w) for w in vocabulary if normalize(w)}
        longest = max((len(w) for w in self.vocabulary), default=1)
        self.max_len = min(longest, max_len) if max_len else longest

    def __call__(self, text: str) -> list[str]:
        text = unicodedata.normalize("NFC", text)
        tokens: list[str] = []
        i, n = 0, len(text)
        while i < n:
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            if _is_cjk(ch):
                for size in range(min(self.max_len, n - i), 0, -1):
                    piece = text[i : i + size]
                    if size == 1 or piece in self.vocabulary:
                        tokens.append(piece)
                        i += size
                        break
                continue
            if ch.isalnum():
                j = i
                while j < n and text[j].isalnum() and not _is_cjk(text[j]):
                    j += 1
                tokens.append(text[i:j])
                i = j
                continue
            tokens.append(ch)
            i += 1
        return tokens


def load_stopwords(path: str | Path) -> set[str]:
    """Read a stopword file: one UTF-8 token per line, blank lines ignored."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = normalize(line)
            if word:
                words.add(word)
    return words

