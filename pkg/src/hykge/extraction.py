"""Pre-retrieval text processing: stopword filtering and entity extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

from .providers import Recognizer
from .text import Tokenizer, WhitespaceTokenizer, dedup_key, is_valid_token, normalize


@dataclass
class ExtractionResult:
    mentions: list[str] = field(default_factory=list)
    source_counts: tuple[int, int] = (0, 0)


def filter_stopwords(text: str, stopwords: set[str], tokenizer: Tokenizer | None = None) -> str:
    """Segment ``text``, drop stopwords and punctuation-only tokens, re-join with spaces."""
    tokenize = tokenizer or WhitespaceTokenizer()
    folded = {w.casefold() for w in stopwords}
    kept = [
        tok
        for tok in tokenize(normalize(text))
        if is_valid_token(tok) and tok.casefold() not in folded
    ]
    return " ".join(kept)


def _unique_surfaces(text: str, recognizer: Recognizer) -> list[str]:
    if not text.strip():
        return []
    out: dict[str, str] = {}
    for ent in recognizer.recognize(text):
        surface = normalize(ent.surface)
        if surface:
            out.setdefault(dedup_key(surface), surface)
    return list(out.values())


def extract_entities(query: str, hypothesis: str, recognizer: Recognizer) -> ExtractionResult:
    """Recognize entities in the query and the hypothesis output and union them.

    The two texts go to the recognizer separately; only entity surfaces are
    kept, so relations asserted in the hypothesis never reach retrieval.
    """
    if not query.strip():
        raise ValueError("query must be non-empty")
    from_query = _unique_surfaces(query, recognizer)
    from_ho = _unique_surfaces(hypothesis, recognizer)
    merged: dict[str, str] = {}
    for surface in from_query + from_ho:
        merged.setdefault(dedup_key(surface), surface)
    return ExtractionResult(list(merged.values()), (len(from_query), len(from_ho)))
