"""Automatic text metrics and judge-model scoring.

Word-overlap metrics (BLEU-n with brevity penalty, ROUGE-n and ROUGE-L,
Distinct-n) plus selection precision/recall/F1 and the 0-3 judge protocols
run over transcript bundles. Metric functions are pure; judge repetitions
may run concurrently because aggregation is order-independent.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .backend import Backend, BackendFailure, user_request
from .prompts import UnparsableScore, parse_judge_score, render_prompt

# Smoothing constant for zero n-gram counts; keeps log-space BLEU finite
# while leaving genuine overlap untouched.
BLEU_EPSILON = 1e-9


class EmptyCandidate(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class AlignmentError(ValueError):
    """Predicted and gold label maps cover different utterances."""


class InsufficientValidScores(RuntimeError):
    """Fewer than the minimum parseable judge repetitions."""


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidate: str, references: Sequence[str], n: int) -> float:
    """Cumulative BLEU-n: geometric mean of modified precisions times BP."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    cand = tokenize(candidate)
    if not cand:
        raise EmptyCandidate("empty candidate")
    refs = [tokenize(r) for r in references if tokenize(r)]
    if not refs:
        raise ValueError("at least one nonempty reference required")

    log_sum = 0.0
    for k in range(1, n + 1):
        cand_grams = ngrams(cand, k)
        total = sum(cand_grams.values())
        if total == 0:
            log_sum += math.log(BLEU_EPSILON)
            continue
        max_ref: Counter = Counter()
        for ref in refs:
            ref_grams = ngrams(ref, k)
            for gram, count in ref_grams.items():
                max_ref[gram] = max(max_ref[gram], count)
        clipped = sum(min(count, max_ref[gram]) for gram, count in cand_grams.items())
        precision = clipped / total if clipped else BLEU_EPSILON
        log_sum += math.log(precision)

    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_sum / n)


def rouge_n(candidate: str, reference: str, n: int) -> tuple[float, float, float]:
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        raise ValueError("rouge needs nonempty candidate and reference")
    cand_grams, ref_grams = ngrams(cand, n), ngrams(ref, n)
    overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
    total_cand = sum(cand_grams.values())
    total_ref = sum(ref_grams.values())
    precision = overlap / total_cand if total_cand else 0.0
    recall = overlap / total_ref if total_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> tuple[float, float, float]:
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        raise ValueError("rouge needs nonempty candidate and reference")
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def distinct_n(texts: Sequence[str], n: int) -> float:
    """Unique n-grams over total n-grams pooled across the response set."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not texts:
        raise EmptyInput("no texts")
    pooled: Counter = Counter()
    for text in texts:
        pooled.update(ngrams(tokenize(text), n))
    total = sum(pooled.values())
    if total == 0:
        raise EmptyInput("no n-grams of requested order")
    return len(pooled) / total


def selection_prf(
    predicted: Mapping[object, set[str] | frozenset[str]],
    gold: Mapping[object, set[str] | frozenset[str]],
) -> tuple[float, float, float]:
    """Micro-averaged precision/recall/F1 over per-utterance selections."""
    if set(predicted) != set(gold):
        raise AlignmentError("predicted and gold cover different utterances")
    tp = fp = fn = 0
    for key in predicted:
        p, g = set(predicted[key]), set(gold[key])
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# Judge protocols -------------------------------------------------------------

SESSION_METRICS = {
    "Coherence": "judge_coherence",
    "Engagingness": "judge_engagingness",
    "Closeness": "judge_closeness",
    "Reflectiveness": "judge_reflectiveness",
}
EPISODE_METRICS = {
    "ConsistencyEpisode": "judge_consistency_episode",
    "ReflectivenessEpisode": "judge_reflectiveness_episode",
    "EngagingnessEpisode": "judge_engagingness_episode",
}
MEMORY_SLOT_METRICS = ("Closeness", "Reflectiveness")

DEFAULT_REPETITIONS = 5
MIN_VALID_SCORES = 3


@dataclass(frozen=True)
class JudgeScore:
    metric: str
    repetitions: tuple[int, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if any(not 0 <= r <= 3 for r in self.repetitions):
            raise ValueError("judge scores live in [0, 3]")

    @property
    def mean(self) -> float:
        return sum(self.repetitions) / len(self.repetitions)


def judge_metric(
    metric: str,
    dialogues: Sequence[str],
    judge: Backend,
    *,
    shared_memory: str = "",
    repetitions: int = DEFAULT_REPETITIONS,
    retries_per_repetition: int = 2,
    min_valid: int = MIN_VALID_SCORES,
    temperature: float = 0.7,
    max_tokens: int = 16,
) -> JudgeScore:
    """Render the metric's prompt, score it ``repetitions`` times, average.

    Unparsable repetitions are retried then dropped with a warning; fewer
    than ``min_valid`` parsed scores raises InsufficientValidScores.
    """
    if metric in SESSION_METRICS:
        if len(dialogues) != 1:
            raise ValueError(f"{metric} scores exactly one dialogue")
        slots = {"dialogue": dialogues[0]}
        if metric in MEMORY_SLOT_METRICS:
            slots["shared_memory"] = shared_memory or "(none)"
        template_id = SESSION_METRICS[metric]
    elif metric in EPISODE_METRICS:
        if len(dialogues) != 5:
            raise ValueError(f"{metric} scores exactly five dialogues")
        slots = {f"dialogue{i + 1}": d for i, d in enumerate(dialogues)}
        template_id = EPISODE_METRICS[metric]
    else:
        raise KeyError(f"unknown judge metric {metric!r}")

    prompt = render_prompt(template_id, slots)
    scores: list[int] = []
    warnings: list[str] = []
    for rep in range(repetitions):
        parsed: int | None = None
        for attempt in range(retries_per_repetition + 1):
            request = user_request(
                prompt,
                temperature=temperature,
                max_tokens=max_tokens,
                seed=rep * 100 + attempt,
                tags={"template_id": template_id, "repetition": str(rep)},
            )
            try:
                response = judge.complete(request)
                parsed = parse_judge_score(response.text)
                break
            except UnparsableScore:
                continue
            except BackendFailure as exc:
                warnings.append(f"repetition {rep}: backend failure {exc}")
                break
        if parsed is None:
            warnings.append(f"repetition {rep}: dropped after retries")
        else:
            scores.append(parsed)

    if len(scores) < min_valid:
        raise InsufficientValidScores(
            f"{metric}: only {len(scores)} valid scores (need {min_valid})"
        )
    return JudgeScore(metric=metric, repetitions=tuple(scores), warnings=tuple(warnings))


def render_dialogue(turns: Sequence[tuple[str, str]]) -> str:
    """Plain 'Speaker: text' lines, the slot format all judge prompts use."""
    return "\n".join(f"{speaker}: {text}" for speaker, text in turns)


@dataclass
class MetricReport:
    """Per-method aggregate of the automatic metrics, JSONL-serializable."""

    method: str
    rows: list[dict] = field(default_factory=list)

    def add_pair(self, candidate: str, reference: str, session_id: str = "") -> None:
        r1 = rouge_n(candidate, reference, 1)
        r2 = rouge_n(candidate, reference, 2)
        rl = rouge_l(candidate, reference)
        self.rows.append(
            {
                "session_id": session_id,
                "bleu_1": bleu_n(candidate, [reference], 1),
                "bleu_2": bleu_n(candidate, [reference], 2),
                "bleu_3": bleu_n(candidate, [reference], 3),
                "bleu_4": bleu_n(candidate, [reference], 4),
                "rouge_1": r1[2],
                "rouge_2": r2[2],
                "rouge_l": rl[2],
            }
        )

    def aggregate(self, responses: Sequence[str] | None = None) -> dict:
        keys = ("bleu_1", "bleu_2", "bleu_3", "bleu_4", "rouge_1", "rouge_2", "rouge_l")
        out = {
            key: (sum(row[key] for row in self.rows) / len(self.rows) if self.rows else 0.0)
            for key in keys
        }
        if responses:
            out["distinct_1"] = distinct_n(responses, 1)
            out["distinct_2"] = distinct_n(responses, 2)
        out["method"] = self.method
        out["n"] = len(self.rows)
        return out
