"""Q&A datasets and answer-quality metrics (EM, PCR, ROUGE-1 recall, BLEU)."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .text import Tokenizer, WhitespaceTokenizer

logger = logging.getLogger(__name__)

_OPTION_TOKEN = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class McqItem:
    id: str
    question: str
    options: dict[str, str]
    gold: frozenset[str]

    def __post_init__(self) -> None:
        if not self.gold:
            raise ValueError(f"item {self.id}: empty gold answer")
        if not self.gold <= set(self.options):
            raise ValueError(f"item {self.id}: gold {sorted(self.gold)} not among options")

    def prompt_text(self) -> str:
        lines = [self.question] + [f"{k}. {v}" for k, v in sorted(self.options.items())]
        return "\n".join(lines)


@dataclass(frozen=True)
class OpenQaItem:
    id: str
    context: str
    question: str
    reference: str

    def __post_init__(self) -> None:
        if not self.reference.strip():
            raise ValueError(f"item {self.id}: empty reference")

    def prompt_text(self) -> str:
        return f"{self.context}\n{self.question}" if self.context else self.question


def load_dataset(path: str | Path) -> list[McqItem] | list[OpenQaItem]:
    """Load a JSON-lines dataset; the item type is decided by the keys present."""
    items: list[Any] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "options" in obj:
                    items.append(
                        McqItem(
                            str(obj["id"]),
                            obj["question"],
                            {str(k).strip().upper(): v for k, v in obj["options"].items()},
                            frozenset(ch for ch in obj["answer"].upper() if ch.isalpha()),
                        )
                    )
                else:
                    items.append(
                        OpenQaItem(str(obj["id"]), obj.get("context", ""), obj["question"], obj["reference"])
                    )
            except (json.JSONDecodeError, KeyError, AttributeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad dataset line ({exc})") from None
    kinds = {type(i) for i in items}
    if len(kinds) > 1:
        raise ValueError(f"{path}: mixes multiple-choice and open-ended items")
    return items


def extract_choice_letters(response: str, allowed: Iterable[str]) -> set[str]:
    """Option letters from the first line that names any.

    A token counts when it is a run of ASCII letters/digits made entirely of
    allowed letters, so ``"ABD"`` yields three letters while ``"cat"`` and
    ``"Also"`` yield none.
    """
    allowed = set(allowed)
    if not allowed:
        raise ValueError("allowed letters must be non-empty")
    for line in response.splitlines():
        found: set[str] = set()
        for tok in _OPTION_TOKEN.findall(line):
            if all(ch in allowed for ch in tok):
                found.update(tok)
        if found:
            return found
    return set()


def exact_match(pred: set[str], gold: set[str]) -> int:
    if not gold:
        raise ValueError("gold must be non-empty")
    return int(set(pred) == set(gold))


def partial_correct(pred: set[str], gold: set[str]) -> int:
    """1 when the prediction is a non-empty subset of the gold letters."""
    if not gold:
        raise ValueError("gold must be non-empty")
    return int(bool(pred) and set(pred) <= set(gold))


def rouge_recall(response: str, reference: str, tokenizer: Tokenizer | None = None) -> float:
    """ROUGE-1 recall: clipped unigram overlap over reference length."""
    tokenize = tokenizer or WhitespaceTokenizer()
    ref = Counter(tokenize(reference))
    if not ref:
        raise ValueError("reference has no tokens")
    hyp = Counter(tokenize(response))
    return sum((ref & hyp).values()) / sum(ref.values())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(response: str, reference: str, max_n: int = 4, tokenizer: Tokenizer | None = None) -> float:
    """Sentence BLEU with uniform weights, clipped counts and brevity penalty.

    No smoothing: any order with zero clipped matches gives 0.
    """
    tokenize = tokenizer or WhitespaceTokenizer()
    hyp = tokenize(response)
    ref = tokenize(reference)
    if not hyp or not ref:
        raise ValueError("response and reference must both have tokens")
    log_sum = 0.0
    for n in range(1, max_n + 1):
        hyp_ngrams = _ngrams(hyp, n)
        total = sum(hyp_ngrams.values())
        matched = sum((hyp_ngrams & _ngrams(ref, n)).values())
        if matched == 0 or total == 0:
            return 0.0
        log_sum += math.log(matched / total) / max_n
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return bp * math.exp(log_sum)


MCQ_METRICS = ("em", "pcr", "rouge_r")
OPEN_QA_METRICS = ("rouge_r", "bleu1", "bleu4")


@dataclass
class MetricReport:
    """Per-item scores for each run plus mean and std across runs.

    ``scores[run][item_id][metric]``; a metric may be missing for an item
    (e.g. ROUGE-R against empty retrieved knowledge) and is then skipped.
    Perplexity is not computed: providers do not expose token log-probs.
    """

    metrics: tuple[str, ...]
    scores: list[dict[str, dict[str, float]]] = field(default_factory=list)
    label: str = "full"
    ppl: None = None

    def run_means(self, metric: str) -> list[float]:
        means = []
        for run in self.scores:
            vals = [item[metric] for item in run.values() if metric in item]
            means.append(float(np.mean(vals)) if vals else float("nan"))
        return means

    def aggregate(self) -> dict[str, dict[str, float | None]]:
        out = {}
        for metric in self.metrics:
            means = self.run_means(metric)
            finite = [m for m in means if not math.isnan(m)]
            out[metric] = {
                "mean": float(np.mean(finite)) if finite else None,
                "std": float(np.std(finite)) if finite else None,
                "runs": len(finite),
            }
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "metrics": list(self.metrics),
            "aggregate": self.aggregate(),
            "scores": self.scores,
            "ppl": None,
        }


def score_mcq(item: McqItem, answer: str, knowledge: str | None, tokenizer: Tokenizer | None = None) -> dict[str, float]:
    pred = extract_choice_letters(answer, item.options)
    if not pred:
        logger.info("item %s: no option letter found in response", item.id)
    out = {"em": float(exact_match(pred, item.gold)), "pcr": float(partial_correct(pred, item.gold))}
    if knowledge and (tokenizer or WhitespaceTokenizer())(knowledge):
        out["rouge_r"] = rouge_recall(answer, knowledge, tokenizer)
    return out


def score_open_qa(item: OpenQaItem, answer: str, tokenizer: Tokenizer | None = None) -> dict[str, float]:
    tokenize = tokenizer or WhitespaceTokenizer()
    out = {"rouge_r": rouge_recall(answer, item.reference, tokenizer)}
    if tokenize(answer):
        out["bleu1"] = bleu(answer, item.reference, 1, tokenizer)
        out["bleu4"] = bleu(answer, item.reference, 4, tokenizer)
    else:
        out["bleu1"] = out["bleu4"] = 0.0
    return out


AnswerFn = Callable[[str, int], tuple[str, str | None]]


def evaluate(
    items: Sequence[McqItem] | Sequence[OpenQaItem],
    answer_fn: AnswerFn,
    runs: int = 1,
    *,
    tokenizer: Tokenizer | None = None,
    label: str = "full",
) -> MetricReport:
    """Score ``answer_fn(prompt_text, run) -> (answer, retrieved_knowledge)`` over all items."""
    if not items:
        raise ValueError("empty dataset")
    is_mcq = isinstance(items[0], McqItem)
    report = MetricReport(MCQ_METRICS if is_mcq else OPEN_QA_METRICS, label=label)
    for run in range(runs):
        per_item = {}
        for item in items:
            answer, knowledge = answer_fn(item.prompt_text(), run)
            if is_mcq:
                per_item[item.id] = score_mcq(item, answer, knowledge, tokenizer)
            else:
                per_item[item.id] = score_open_qa(item, answer, tokenizer)
        report.scores.append(per_item)
    return report


def format_table(reports: Sequence[MetricReport]) -> str:
    """Plain-text table of mean ± std per configuration."""
    metrics = list(dict.fromkeys(m for r in reports for m in r.metrics))
    header = ["config"] + metrics
    rows = [header]
    for r in reports:
        agg = r.aggregate()
        row = [r.label]
        for m in metrics:
            a = agg.get(m)
            row.append("-" if a is None or a["mean"] is None else f"{100 * a['mean']:.2f}±{100 * a['std']:.2f}")
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
