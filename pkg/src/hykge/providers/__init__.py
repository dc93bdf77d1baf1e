"""Model capability interfaces, deterministic doubles and HTTP adapters."""

from __future__ import annotations

from dataclasses import dataclass

from .base import (
    Embedder,
    GenerationParams,
    Generator,
    PairScorer,
    ProviderError,
    RecognizedEntity,
    Recognizer,
    RetryableError,
    l2_normalize,
)
from .doubles import (
    CallRecorder,
    GazetteerRecognizer,
    HashingEmbedder,
    LexicalOverlapScorer,
    ScriptedGenerator,
    prompt_hash,
)
from .http import HttpEmbedder, HttpGenerator, HttpRecognizer, HttpScorer


@dataclass
class Providers:
    generator: Generator
    embedder: Embedder
    scorer: PairScorer
    recognizer: Recognizer

    @classmethod
    def from_env(cls, **kwargs) -> "Providers":
        return cls(
            HttpGenerator.from_env(**kwargs),
            HttpEmbedder.from_env(**kwargs),
            HttpScorer.from_env(**kwargs),
            HttpRecognizer.from_env(**kwargs),
        )


def score_pair(scorer: PairScorer, query: str, document: str) -> float:
    return scorer.score_pairs([(query, document)])[0]


__all__ = [
    "CallRecorder",
    "Embedder",
    "GazetteerRecognizer",
    "GenerationParams",
    "Generator",
    "HashingEmbedder",
    "HttpEmbedder",
    "HttpGenerator",
    "HttpRecognizer",
    "HttpScorer",
    "LexicalOverlapScorer",
    "PairScorer",
    "ProviderError",
    "Providers",
    "RecognizedEntity",
    "Recognizer",
    "RetryableError",
    "ScriptedGenerator",
    "l2_normalize",
    "prompt_hash",
    "score_pair",
]
