"""Prompt templates for the hypothesis-output call and the reader call."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .chains import ReasoningChain, serialize_chain
from .kg import KnowledgeGraph
from .rerank import ScoredChain

_SLOT = re.compile(r"\{(user_query|background_knowledge)\}")

PHRASES = {
    "en": {
        "chains_lead": "The retrieved knowledge chains are:",
        "entities_lead": "The retrieved entity descriptions are:",
        "none": "(none)",
    },
    "zh": {
        "chains_lead": "检索到的知识链为：",
        "entities_lead": "检索到的实体描述为：",
        "none": "（无）",
    },
}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    @property
    def placeholders(self) -> list[str]:
        return _SLOT.findall(self.text)

    @property
    def sections(self) -> list[tuple[str, str]]:
        """``(header, body)`` pairs split on lines starting with ``###``."""
        out: list[tuple[str, list[str]]] = []
        for line in self.text.split("\n"):
            if line.startswith("###"):
                out.append((line, []))
            elif out:
                out[-1][1].append(line)
        return [(h, "\n".join(body).strip("\n")) for h, body in out]

    def render(self, **values: str) -> str:
        # one pass, so braces inside user text are never re-interpreted
        missing = set(self.placeholders) - values.keys()
        if missing:
            raise KeyError(f"missing values for {sorted(missing)}")
        return _SLOT.sub(lambda m: values[m.group(1)], self.text)


@dataclass(frozen=True)
class PromptSet:
    ho: PromptTemplate
    reader: PromptTemplate
    locale: str = "en"

    @classmethod
    def load(cls, locale: str = "en", prompt_dir: str | Path | None = None) -> "PromptSet":
        if locale not in PHRASES:
            raise ValueError(f"unknown prompt locale {locale!r}")
        texts = {}
        for name in ("ho", "reader"):
            override = Path(prompt_dir) / f"{name}.txt" if prompt_dir else None
            if override is not None and override.exists():
                texts[name] = override.read_text(encoding="utf-8")
            else:
                texts[name] = resources.files("hykge").joinpath("templates", locale, f"{name}.txt").read_text(
                    encoding="utf-8"
                )
        return cls(PromptTemplate("ho", texts["ho"]), PromptTemplate("reader", texts["reader"]), locale)

    @property
    def phrases(self) -> dict[str, str]:
        return PHRASES[self.locale]


_DEFAULT: PromptSet | None = None


def default_prompts() -> PromptSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = PromptSet.load()
    return _DEFAULT


def _sentence(line: str) -> str:
    return line.rstrip().rstrip(".。") + "."


def background_block(lines: Sequence[str], lead: str, none: str) -> str:
    if not lines:
        return f"{lead} {none}"
    return "\n".join([lead, *(_sentence(line) for line in lines)])


def render_ho_prompt(query: str, prompts: PromptSet | None = None) -> str:
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    return (prompts or default_prompts()).ho.render(user_query=query)


def render_reader_prompt(
    query: str,
    chains: Iterable[ScoredChain | ReasoningChain],
    g: KnowledgeGraph,
    *,
    with_descriptions: bool = True,
    prompts: PromptSet | None = None,
) -> str:
    """Reader prompt with one serialized chain per line, in the given order."""
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    prompts = prompts or default_prompts()
    lines = []
    for item in chains:
        chain = item.chain if isinstance(item, ScoredChain) else item
        lines.append(serialize_chain(chain, g, with_descriptions))
    block = background_block(lines, prompts.phrases["chains_lead"], prompts.phrases["none"])
    return prompts.reader.render(user_query=query, background_knowledge=block)


def render_entity_prompt(
    query: str, anchors: Iterable[int], g: KnowledgeGraph, *, prompts: PromptSet | None = None
) -> str:
    """Reader prompt carrying ``name: description`` lines for anchors instead of chains."""
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    prompts = prompts or default_prompts()
    lines = []
    for a in anchors:
        desc = g.description(a)
        lines.append(f"{g.name(a)}: {desc}" if desc else g.name(a))
    block = background_block(lines, prompts.phrases["entities_lead"], prompts.phrases["none"])
    return prompts.reader.render(user_query=query, background_knowledge=block)
