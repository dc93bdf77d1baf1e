"""Fragment-granularity-aware reranking of reasoning chains.

The query and the hypothesis output are stopword-filtered and cut into
overlapping token windows. Every chain is scored against every fragment by
the pair scorer; a chain's score is the maximum (or mean) over fragments,
so a chain that matches any single fragment well survives pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .chains import ReasoningChain, serialize_chain
from .extraction import filter_stopwords
from .kg import KnowledgeGraph
from .providers import PairScorer
from .text import Tokenizer

SCORE_BATCH = 64


class FragmentSource(str, Enum):
    QUERY = "query"
    HYPOTHESIS = "hypothesis"
    MIXED = "mixed"


@dataclass(frozen=True)
class Fragment:
    text: str
    index: int
    source: FragmentSource


@dataclass(frozen=True)
class ScoredChain:
    chain: ReasoningChain
    score: float | None  # None when the reranker is bypassed
    best_fragment: int


@dataclass
class PrunedChains:
    chains: list[ScoredChain] = field(default_factory=list)
    candidates: int = 0

    def __len__(self) -> int:
        return len(self.chains)

    def __iter__(self):
        return iter(self.chains)


def window_spans(n: int, lc: int, oc: int) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` windows of width ``lc`` advancing by ``lc - oc``.

    Windows stop once one reaches the end, so the last window may be short.
    """
    if lc <= 0 or not 0 <= oc < lc:
        raise ValueError("need lc > 0 and 0 <= oc < lc")
    stride = lc - oc
    spans = []
    start = 0
    while start < n:
        end = min(start + lc, n)
        spans.append((start, end))
        if end == n:
            break
        start += stride
    return spans


def expected_fragment_count(n: int, lc: int, oc: int) -> int:
    if n <= 0:
        return 0
    if n <= lc:
        return 1
    return 1 + math.ceil((n - lc) / (lc - oc))


def chunk(
    query: str,
    hypothesis: str,
    lc: int = 10,
    oc: int = 4,
    stopwords: set[str] = frozenset(),
    tokenizer: Tokenizer | None = None,
) -> list[Fragment]:
    """Filter and window the query and hypothesis separately, query fragments first."""
    fragments: list[Fragment] = []
    for text, source in ((query, FragmentSource.QUERY), (hypothesis, FragmentSource.HYPOTHESIS)):
        filtered = filter_stopwords(text, stopwords, tokenizer)
        tokens = filtered.split(" ") if filtered else []
        for start, end in window_spans(len(tokens), lc, oc):
            fragments.append(Fragment(" ".join(tokens[start:end]), len(fragments), source))
    return fragments


def whole_text_fragment(
    query: str, hypothesis: str, stopwords: set[str] = frozenset(), tokenizer: Tokenizer | None = None
) -> list[Fragment]:
    """The unchunked reference: filtered query and hypothesis as one fragment."""
    parts = (filter_stopwords(query, stopwords, tokenizer), filter_stopwords(hypothesis, stopwords, tokenizer))
    text = " ".join(p for p in parts if p)
    return [Fragment(text, 0, FragmentSource.MIXED)] if text else []


def rerank(
    chains: Sequence[ReasoningChain],
    fragments: Sequence[Fragment],
    scorer: PairScorer,
    g: KnowledgeGraph,
    top_k: int = 10,
    *,
    aggregation: str = "max",
    query: str | None = None,
) -> PrunedChains:
    """Keep the ``top_k`` chains by aggregated fragment score.

    Chains are scored without endpoint descriptions. With no fragments the
    raw ``query`` is used as the only reference. Ties go to the shorter chain,
    then to search order.
    """
    if top_k <= 0:
        raise ValueError("top_k must be positive")
    if aggregation not in ("max", "mean"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    chains = list(chains)
    if not chains:
        return PrunedChains([], 0)
    refs = [f.text for f in fragments if f.text]
    if not refs:
        if not query:
            raise ValueError("no fragments and no query to score against")
        refs = [query]
    texts = [serialize_chain(c, g, with_descriptions=False) for c in chains]
    pairs = [(ref, text) for text in texts for ref in refs]
    flat: list[float] = []
    for lo in range(0, len(pairs), SCORE_BATCH):
        flat.extend(scorer.score_pairs(pairs[lo : lo + SCORE_BATCH]))
    m = len(refs)
    scored = []
    for i, chain in enumerate(chains):
        row = flat[i * m : (i + 1) * m]
        best = max(range(m), key=lambda j: (row[j], -j))
        score = row[best] if aggregation == "max" else sum(row) / m
        scored.append(ScoredChain(chain, float(score), best))
    scored.sort(key=lambda s: (-s.score, s.chain.sort_key))
    return PrunedChains(scored[:top_k], len(chains))
