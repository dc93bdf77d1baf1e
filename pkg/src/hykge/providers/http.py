"""JSON-over-HTTP adapters for remote model services.

Each adapter speaks one endpoint of a minimal protocol::

    POST {base}/generate  {"prompt", "max_tokens", "temperature"} -> {"text"}
    POST {base}/embed     {"texts": [...]}                         -> {"vectors": [[...]]}
    POST {base}/score     {"pairs": [[query, document], ...]}      -> {"scores": [...]}
    POST {base}/ner       {"text"}                                 -> {"entities": [{"surface","start","end"}]}

Transport errors and 5xx responses are retried three times with
exponential backoff starting at 200 ms; other non-2xx responses fail fast.
"""

from __future__ import annotations

import logging
import os
import time
from typing import Any, Sequence

import httpx
import numpy as np

from .base import (
    GenerationParams,
    ProviderError,
    RecognizedEntity,
    RetryableError,
    check_embeddings,
)

logger = logging.getLogger(__name__)

ENV_VARS = {
    "generator": "HYKGE_GENERATOR_URL",
    "embedder": "HYKGE_EMBEDDER_URL",
    "scorer": "HYKGE_SCORER_URL",
    "recognizer": "HYKGE_NER_URL",
}


class _HttpProvider:
    endpoint = ""
    env_var = ""

    def __init__(
        self,
        base_url: str,
        *,
        client: httpx.Client | None = None,
        timeout: float = 60.0,
        attempts: int = 3,
        backoff: float = 0.2,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)
        self.attempts = attempts
        self.backoff = backoff

    @classmethod
    def from_env(cls, **kwargs):
        url = os.environ.get(cls.env_var)
        if not url:
            raise ProviderError(f"{cls.env_var} is not set")
        return cls(url, **kwargs)

    @property
    def url(self) -> str:
        return f"{self.base_url}/{self.endpoint}"

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict[str, Any]) -> dict[str, Any]:
        last: ProviderError | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.url, json=payload)
            except httpx.TransportError as exc:
                last = RetryableError(f"POST {self.url} failed: {exc}")
                logger.warning("%s (attempt %d/%d)", last, attempt + 1, self.attempts)
                continue
            if resp.status_code >= 500:
                last = RetryableError(
                    f"POST {self.url} returned {resp.status_code}", resp.status_code, resp.text[:500]
                )
                logger.warning("%s (attempt %d/%d)", last, attempt + 1, self.attempts)
                continue
            if not resp.is_success:
                raise ProviderError(
                    f"POST {self.url} returned {resp.status_code}: {resp.text[:200]}",
                    resp.status_code,
                    resp.text[:500],
                )
            try:
                return resp.json()
            except ValueError:
                raise ProviderError(f"POST {self.url} returned non-JSON body", resp.status_code, resp.text[:500])
        assert last is not None
        raise last

    def _field(self, body: dict[str, Any], key: str):
        if not isinstance(body, dict) or key not in body:
            raise ProviderError(f"response from {self.url} lacks {key!r}")
        return body[key]


class HttpGenerator(_HttpProvider):
    endpoint = "generate"
    env_var = ENV_VARS["generator"]

    def generate(self, prompt: str, params: GenerationParams = GenerationParams()) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        body = self._post({"prompt": prompt, "max_tokens": params.max_tokens, "temperature": params.temperature})
        text = self._field(body, "text")
        if not isinstance(text, str):
            raise ProviderError("generator 'text' is not a string")
        return text


class HttpEmbedder(_HttpProvider):
    endpoint = "embed"
    env_var = ENV_VARS["embedder"]

    @property
    def tag(self) -> str:
        return f"http:{self.url}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if any(not t for t in texts):
            raise ValueError("cannot embed an empty string")
        if not texts:
            return np.zeros((0, 0))
        vectors = self._field(self._post({"texts": list(texts)}), "vectors")
        return check_embeddings(vectors, len(texts))


class HttpScorer(_HttpProvider):
    endpoint = "score"
    env_var = ENV_VARS["scorer"]

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        scores = self._field(self._post({"pairs": [[q, d] for q, d in pairs]}), "scores")
        if len(scores) != len(pairs):
            raise ProviderError(f"scorer returned {len(scores)} scores for {len(pairs)} pairs")
        return [float(s) for s in scores]

    def score_pair(self, query: str, document: str) -> float:
        return self.score_pairs([(query, document)])[0]


class HttpRecognizer(_HttpProvider):
    endpoint = "ner"
    env_var = ENV_VARS["recognizer"]

    def recognize(self, text: str) -> list[RecognizedEntity]:
        if not text:
            return []
        items = self._field(self._post({"text": text}), "entities")
        out = []
        for item in items:
            try:
                ent = RecognizedEntity(str(item["surface"]), int(item["start"]), int(item["end"]))
            except (KeyError, TypeError, ValueError):
                raise ProviderError(f"malformed entity {item!r}") from None
            if not 0 <= ent.start < ent.end <= len(text) or text[ent.start : ent.end] != ent.surface:
                raise ProviderError(f"entity span {ent} does not match the input text")
            out.append(ent)
        return out
