import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hykge.evaluation import (
    McqItem,
    MetricReport,
    OpenQaItem,
    bleu,
    evaluate,
    exact_match,
    extract_choice_letters,
    format_table,
    load_dataset,
    partial_correct,
    rouge_recall,
)
from hykge.text import DictionarySegmenter

from conftest import FIXTURES


@pytest.mark.parametrize(
    "response, allowed, expected",
    [
        ("The answer is A and C.", "ABCD", {"A", "C"}),
        ("ABD", "ABCD", {"A", "B", "D"}),
        ("A cat", "AB", {"A"}),
        ("no letters here", "ABCD", set()),
        ("Let me think.\nAnswer: (B), (D)", "ABCD", {"B", "D"}),
        ("Option E looks wrong\nA", "ABCD", {"A"}),
    ],
)
def test_extract_choice_letters(response, allowed, expected):
    assert extract_choice_letters(response, set(allowed)) == expected


def test_extract_needs_allowed():
    with pytest.raises(ValueError):
        extract_choice_letters("A", set())


def test_em_pcr_examples():
    abd = {"A", "B", "D"}
    assert exact_match(abd, abd) == 1
    assert exact_match({"A", "B"}, abd) == 0
    assert exact_match(set(), {"A"}) == 0
    assert partial_correct({"A", "B"}, abd) == 1
    assert partial_correct({"A", "B", "C"}, abd) == 0
    assert partial_correct(abd, abd) == 1
    assert partial_correct(set(), abd) == 0
    with pytest.raises(ValueError):
        exact_match({"A"}, set())


def test_rouge_examples():
    assert rouge_recall("a b c", "a b c") == 1.0
    assert rouge_recall("x y", "a b") == 0.0
    assert rouge_recall("a b", "a b c d") == pytest.approx(0.5, abs=1e-9)
    assert rouge_recall("a a", "a a a b") == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        rouge_recall("a", "  ")


def test_bleu_examples():
    assert bleu("the cat sat on the mat", "the cat sat on the mat", 4) == pytest.approx(1.0)
    assert bleu("a b", "a c", 1) == pytest.approx(0.5, abs=1e-9)
    assert bleu("a b c d", "a b c e", 4) == 0.0
    # brevity penalty: hyp 2 tokens vs ref 4
    assert bleu("a b", "a b c d", 1) == pytest.approx(math.exp(1 - 4 / 2), abs=1e-9)
    with pytest.raises(ValueError):
        bleu("", "a", 1)


def test_bleu4_hand_value():
    hyp, ref = "a b c d e", "a b c d f"
    p = [4 / 5, 3 / 4, 2 / 3, 1 / 2]
    assert bleu(hyp, ref, 4) == pytest.approx(math.exp(sum(math.log(x) for x in p) / 4), abs=1e-9)


def test_metrics_with_segmenter():
    seg = DictionarySegmenter(["胃痛", "烧心"])
    assert rouge_recall("胃痛", "胃痛烧心", seg) == pytest.approx(0.5)


words = st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=8)


@settings(max_examples=100, deadline=None)
@given(words, words, st.sampled_from(["  ", " ", "\t", " \n "]))
def test_metric_bounds_and_whitespace_invariance(hyp, ref, sep):
    h, r = " ".join(hyp), " ".join(ref)
    for value in (rouge_recall(h, r), bleu(h, r, 1), bleu(h, r, 4)):
        assert 0.0 <= value <= 1.0
    assert rouge_recall(sep + sep.join(hyp) + sep, sep.join(ref)) == rouge_recall(h, r)
    assert bleu(sep.join(hyp), sep + sep.join(ref), 4) == bleu(h, r, 4)


def test_em_le_pcr_random():
    rng = random.Random(0)
    letters = "ABCDE"
    for _ in range(1000):
        gold = set(rng.sample(letters, rng.randint(1, 5)))
        pred = set(rng.sample(letters, rng.randint(0, 5)))
        assert exact_match(pred, gold) <= partial_correct(pred, gold)


def test_items_validate():
    with pytest.raises(ValueError):
        McqItem("x", "q", {"A": "a"}, frozenset())
    with pytest.raises(ValueError):
        McqItem("x", "q", {"A": "a"}, frozenset({"B"}))
    with pytest.raises(ValueError):
        OpenQaItem("x", "", "q", " ")


def test_load_datasets(tmp_path):
    mcq = load_dataset(FIXTURES / "mcq.jsonl")
    assert [i.id for i in mcq] == ["q1", "q2", "q3"]
    assert mcq[1].gold == frozenset({"A", "B"})
    assert mcq[0].prompt_text().splitlines()[1] == "A. antibiotic"
    open_items = load_dataset(FIXTURES / "openqa.jsonl")
    assert isinstance(open_items[0], OpenQaItem)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": 1, "question": "q", "options": {"A": "x"}, "answer": "B"}\n')
    with pytest.raises(ValueError, match=":1:"):
        load_dataset(bad)


def test_evaluate_and_aggregate():
    items = load_dataset(FIXTURES / "mcq.jsonl")
    answers = {0: {"q1": "B", "q2": "A", "q3": "D"}, 1: {"q1": "B", "q2": "AB", "q3": "C"}}

    def answer_fn(prompt, run):
        item = next(i for i in items if prompt.startswith(i.question))
        return answers[run][item.id], "knowledge about B"

    report = evaluate(items, answer_fn, runs=2)
    assert report.scores[0]["q2"] == {"em": 0.0, "pcr": 1.0, "rouge_r": pytest.approx(0.0)}
    agg = report.aggregate()
    run_em = [1 / 3, 1.0]
    assert agg["em"]["mean"] == pytest.approx(np.mean(run_em), abs=1e-9)
    assert agg["em"]["std"] == pytest.approx(np.std(run_em), abs=1e-9)
    assert agg["pcr"]["mean"] == pytest.approx(np.mean([2 / 3, 1.0]), abs=1e-9)
    # recomputable from the stored per-item scores
    for metric in ("em", "pcr"):
        per_run = [np.mean([s[metric] for s in run.values()]) for run in report.scores]
        assert agg[metric]["mean"] == pytest.approx(np.mean(per_run), abs=1e-12)
    assert agg["em"]["mean"] <= agg["pcr"]["mean"]
    doc = report.to_dict()
    assert doc["ppl"] is None
    json.dumps(doc)


def test_rouge_skipped_without_knowledge():
    items = load_dataset(FIXTURES / "mcq.jsonl")
    report = evaluate(items, lambda p, r: ("B", None))
    assert "rouge_r" not in report.scores[0]["q1"]
    assert report.aggregate()["rouge_r"]["mean"] is None
    assert "-" in format_table([report])


def test_open_qa_evaluation():
    items = load_dataset(FIXTURES / "openqa.jsonl")
    report = evaluate(items, lambda p, r: ("an antacid can ease sudden heartburn", None))
    assert report.scores[0]["c2"] == {"rouge_r": 1.0, "bleu1": 1.0, "bleu4": 1.0}
    assert set(report.metrics) == {"rouge_r", "bleu1", "bleu4"}


def test_format_table():
    r = MetricReport(("em",), [{"a": {"em": 1.0}}, {"a": {"em": 0.0}}], label="full")
    table = format_table([r])
    assert "50.00±50.00" in table
    assert table.splitlines()[0].split() == ["config", "em"]
