"""Metric oracles and judge protocols."""

from __future__ import annotations

import math
import random

import pytest

from dyadmem.backend import MockBackend, MockRule
from dyadmem.evalkit import (
    AlignmentError,
    EmptyCandidate,
    EmptyInput,
    InsufficientValidScores,
    JudgeScore,
    MetricReport,
    bleu_n,
    distinct_n,
    judge_metric,
    render_dialogue,
    rouge_l,
    rouge_n,
    selection_prf,
)

import reference_metrics as ref

VOCAB = ["the", "cat", "sat", "on", "a", "mat", "dog", "ran", "far", "blue"]


def _random_text(rng, lo=1, hi=12):
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(lo, hi)))


def test_bleu_worked_examples():
    assert bleu_n("the cat", ["the cat"], 1) == pytest.approx(1.0)
    assert bleu_n("the cat", ["the cat sat"], 1) == pytest.approx(math.exp(1 - 3 / 2))
    assert bleu_n("dog ran", ["the cat sat"], 1) < 1e-6  # epsilon-smoothed
    with pytest.raises(EmptyCandidate):
        bleu_n("", ["the cat"], 1)


def test_rouge_worked_examples():
    p, r, f1 = rouge_n("the cat sat", "the cat", 1)
    assert (p, r) == pytest.approx((2 / 3, 1.0))
    assert rouge_n("same words here", "same words here", 1) == pytest.approx((1, 1, 1))
    p, r, f1 = rouge_l("a b c", "a c b")
    assert r == pytest.approx(2 / 3)


def test_distinct_worked_examples():
    assert distinct_n(["the the cat"], 1) == pytest.approx(2 / 3)
    assert distinct_n(["all words differ here"], 1) == 1.0
    assert distinct_n(["x x x x x"], 1) == pytest.approx(1 / 5)
    with pytest.raises(EmptyInput):
        distinct_n([], 1)
    with pytest.raises(EmptyInput):
        distinct_n(["one"], 2)  # too short for bigrams


def test_metrics_match_brute_force_reference():
    rng = random.Random(99)
    for _ in range(100):
        cand = _random_text(rng)
        refs = [_random_text(rng) for _ in range(rng.randint(1, 2))]
        for n in (1, 2, 3, 4):
            assert bleu_n(cand, refs, n) == pytest.approx(
                ref.bleu_ref(cand, refs, n), abs=1e-9
            )
        for n in (1, 2):
            assert rouge_n(cand, refs[0], n) == pytest.approx(
                ref.rouge_n_ref(cand, refs[0], n), abs=1e-9
            )
        assert rouge_l(cand, refs[0]) == pytest.approx(
            ref.rouge_l_ref(cand, refs[0]), abs=1e-9
        )
        texts = [_random_text(rng) for _ in range(rng.randint(1, 4))]
        for n in (1, 2):
            try:
                mine = distinct_n(texts, n)
            except EmptyInput:
                continue
            assert mine == pytest.approx(ref.distinct_ref(texts, n), abs=1e-9)
            assert 0 < mine <= 1.0


def test_distinct_unique_iff_one():
    assert distinct_n(["each token once"], 1) == 1.0
    assert distinct_n(["a b a"], 1) < 1.0


def test_selection_prf_cases():
    ten = {i: {"m1", "m2"} for i in range(10)}
    assert selection_prf(ten, ten) == (1.0, 1.0, 1.0)

    pred = {0: set()}
    gold = {0: {"m1"}}
    p, r, f1 = selection_prf(pred, gold)
    assert (p, r, f1) == (0.0, 0.0, 0.0)

    pred = {0: {"m1", "spurious"}}
    gold = {0: {"m1", "m2"}}
    assert selection_prf(pred, gold) == (0.5, 0.5, 0.5)

    with pytest.raises(AlignmentError):
        selection_prf({0: set()}, {1: set()})


def test_selection_prf_swap_symmetry():
    rng = random.Random(5)
    items = ["m1", "m2", "m3", "m4"]
    pred = {i: set(rng.sample(items, rng.randint(0, 4))) for i in range(8)}
    gold = {i: set(rng.sample(items, rng.randint(0, 4))) for i in range(8)}
    p1, r1, _ = selection_prf(pred, gold)
    p2, r2, _ = selection_prf(gold, pred)
    assert (p1, r1) == (r2, p2)


def _judge(texts):
    """Mock judge yielding the given outputs in order."""
    state = {"i": 0}

    def respond(req):
        out = texts[min(state["i"], len(texts) - 1)]
        state["i"] += 1
        return out

    return MockBackend([MockRule(respond=respond)])


def test_judge_metric_constant():
    score = judge_metric("Coherence", ["A: hi\nB: yo"], _judge(["Score: 2"]))
    assert score.mean == 2.0
    assert score.repetitions == (2, 2, 2, 2, 2)


def test_judge_metric_sequence_mean():
    outs = ["Score: 1", "Score: 2", "Score: 2", "Score: 3", "Score: 2"]
    score = judge_metric("Engagingness", ["A: hi"], _judge(outs))
    assert score.mean == pytest.approx(2.0)


def test_judge_metric_mean_is_order_invariant():
    outs = ["Score: 3", "Score: 1", "Score: 2", "Score: 2", "Score: 2"]
    a = judge_metric("Coherence", ["A: hi"], _judge(outs))
    b = judge_metric("Coherence", ["A: hi"], _judge(list(reversed(outs))))
    assert a.mean == b.mean


def test_judge_metric_insufficient_scores():
    with pytest.raises(InsufficientValidScores):
        judge_metric("Coherence", ["A: hi"], _judge(["it was lovely, no score"]))


def test_judge_metric_episode_arity():
    judge = _judge(["Score: 1"])
    with pytest.raises(ValueError):
        judge_metric("ConsistencyEpisode", ["only one"], judge)
    score = judge_metric("ConsistencyEpisode", [f"d{i}" for i in range(5)], judge)
    assert 0 <= score.mean <= 3


def test_judge_memory_slot_required_metrics():
    judge = _judge(["Score: 3"])
    score = judge_metric(
        "Reflectiveness", ["A: remember the boat?"], judge,
        shared_memory="A and B fixed a boat.",
    )
    assert score.mean == 3.0


def test_judge_score_range_enforced():
    with pytest.raises(ValueError):
        JudgeScore("Coherence", (4,))


def test_render_dialogue():
    assert render_dialogue([("A", "hi"), ("B", "yo")]) == "A: hi\nB: yo"


def test_metric_report_aggregate():
    report = MetricReport(method="test")
    report.add_pair("the cat sat", "the cat sat on a mat", "s1")
    summary = report.aggregate(["the cat sat", "a dog ran"])
    assert summary["n"] == 1
    assert 0 < summary["bleu_1"] <= 1
    assert summary["distinct_1"] == 1.0
