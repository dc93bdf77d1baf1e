"""Deterministic offline stand-ins for the four model capabilities.

Each double is a pure function of its input and construction arguments, so
pipeline runs built on them are reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import re
import threading
import unicodedata
from collections import Counter
from typing import Iterable, Mapping, Sequence

import numpy as np

from .base import GenerationParams, RecognizedEntity, l2_normalize

DEFAULT_FALLBACK = "I am unable to answer this question."

_WORD = re.compile(r"\w+")


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ScriptedGenerator:
    """Replies from a fixture table keyed by the SHA-256 of the prompt.

    ``rules`` are ``(marker, reply)`` pairs consulted when no hashed fixture
    matches: the first marker that occurs in the prompt wins. Otherwise the
    fallback text is returned.
    """

    def __init__(
        self,
        fixtures: Mapping[str, str] | None = None,
        fallback: str = DEFAULT_FALLBACK,
        rules: Sequence[tuple[str, str]] = (),
    ) -> None:
        self.fixtures = dict(fixtures or {})
        self.fallback = fallback
        self.rules = list(rules)

    @classmethod
    def from_prompts(cls, pairs: Mapping[str, str], **kwargs) -> "ScriptedGenerator":
        return cls({prompt_hash(p): reply for p, reply in pairs.items()}, **kwargs)

    def generate(self, prompt: str, params: GenerationParams = GenerationParams()) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        reply = self.fixtures.get(prompt_hash(prompt))
        if reply is not None:
            return reply
        for marker, text in self.rules:
            if marker in prompt:
                return text
        return self.fallback


class HashingEmbedder:
    """Signed feature hashing of character n-grams into a fixed dimension.

    Strings sharing many n-grams land close together, identical strings map
    to identical vectors, and disjoint character sets are near-orthogonal.
    """

    def __init__(self, dim: int = 256, seed: int = 0, ngram_range: tuple[int, int] = (1, 3)) -> None:
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.ngram_range = ngram_range
        self._key = seed.to_bytes(8, "little", signed=True)
        lo, hi = ngram_range
        self.tag = f"hashing-ngram{lo}{hi}-d{dim}-s{seed}"

    def _vector(self, text: str) -> np.ndarray:
        norm = unicodedata.normalize("NFC", text).strip().casefold()
        padded = f"\x02{norm}\x03"
        vec = np.zeros(self.dim)
        lo, hi = self.ngram_range
        counts: Counter[str] = Counter()
        for n in range(lo, hi + 1):
            for i in range(len(padded) - n + 1):
                counts[padded[i : i + n]] += 1
        for gram, count in counts.items():
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
            h = int.from_bytes(digest, "little")
            vec[h % self.dim] += count if (h >> 63) & 1 else -count
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for t in texts:
            if not t:
                raise ValueError("cannot embed an empty string")
        if not texts:
            return np.zeros((0, self.dim))
        return l2_normalize(np.stack([self._vector(t) for t in texts]))


def overlap_tokens(text: str) -> list[str]:
    return _WORD.findall(unicodedata.normalize("NFC", text).casefold())


class LexicalOverlapScorer:
    """Fraction of document tokens that also occur in the query."""

    def score_pair(self, query: str, document: str) -> float:
        if not query or not document:
            raise ValueError("query and document must be non-empty")
        q = set(overlap_tokens(query))
        doc = overlap_tokens(document)
        if not doc:
            return 0.0
        return sum(1 for tok in doc if tok in q) / len(doc)

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [self.score_pair(q, d) for q, d in pairs]


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() and unicodedata.east_asian_width(ch) not in ("W", "F")


class GazetteerRecognizer:
    """Longest-match, left-to-right dictionary recognizer.

    Matches of Latin words must sit on word boundaries so that ``ache`` is
    not found inside ``headache``; CJK text has no such constraint.
    """

    def __init__(self, terms: Iterable[str]) -> None:
        self.terms = {unicodedata.normalize("NFC", t).strip() for t in terms}
        self.terms.discard("")
        self.max_len = max((len(t) for t in self.terms), default=0)

    def recognize(self, text: str) -> list[RecognizedEntity]:
        out: list[RecognizedEntity] = []
        i, n = 0, len(text)
        while i < n:
            match = 0
            for size in range(min(self.max_len, n - i), 0, -1):
                if text[i : i + size] in self.terms and self._bounded(text, i, i + size):
                    match = size
                    break
            if match:
                out.append(RecognizedEntity(text[i : i + match], i, i + match))
                i += match
            else:
                i += 1
        return out

    @staticmethod
    def _bounded(text: str, start: int, end: int) -> bool:
        if start > 0 and _is_word_char(text[start]) and _is_word_char(text[start - 1]):
            return False
        if end < len(text) and _is_word_char(text[end - 1]) and _is_word_char(text[end]):
            return False
        return True


class CallRecorder:
    """Wraps a provider and counts calls per method; thread-safe."""

    def __init__(self, inner) -> None:
        self._inner = inner
        self._lock = threading.Lock()
        self.calls: Counter[str] = Counter()
        self.prompts: list[str] = []

    def __getattr__(self, name: str):
        attr = getattr(self._inner, name)
        if not callable(attr):
            return attr

        def wrapper(*args, **kwargs):
            with self._lock:
                self.calls[name] += 1
                if name == "generate" and args:
                    self.prompts.append(args[0])
            return attr(*args, **kwargs)

        return wrapper
