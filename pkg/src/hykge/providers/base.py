from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np


class ProviderError(RuntimeError):
    """A provider call failed and should not be retried."""

    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class RetryableError(ProviderError):
    """Transport failure or 5xx; the caller may retry."""


@dataclass(frozen=True)
class GenerationParams:
    max_tokens: int = 500
    temperature: float = 0.6

    def __post_init__(self) -> None:
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class RecognizedEntity:
    surface: str
    start: int
    end: int


@runtime_checkable
class Generator(Protocol):
    def generate(self, prompt: str, params: GenerationParams = GenerationParams()) -> str: ...


@runtime_checkable
class Embedder(Protocol):
    tag: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


@runtime_checkable
class PairScorer(Protocol):
    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]: ...


@runtime_checkable
class Recognizer(Protocol):
    def recognize(self, text: str) -> list[RecognizedEntity]: ...


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    """Row-normalize; zero rows stay zero."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    return np.divide(arr, norms, out=np.zeros_like(arr), where=norms > 0)


def check_embeddings(vectors: Sequence[Sequence[float]], expected: int) -> np.ndarray:
    """Validate a batch of raw vectors and return them unit-normalized."""
    if len(vectors) != expected:
        raise ProviderError(f"embedder returned {len(vectors)} vectors for {expected} texts")
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise ProviderError(f"dimension mismatch within batch: {sorted(dims)}")
    if not vectors:
        return np.zeros((0, 0))
    return l2_normalize(np.asarray(vectors, dtype=np.float64))
