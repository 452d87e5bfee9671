"""Brute-force reference metrics.

Deliberately naive: list scans instead of Counters, a full quadratic LCS
table instead of the rolling row. These stay independent of the package
implementations they check.
"""

from __future__ import annotations

import math

EPS = 1e-9


def _toks(text: str) -> list[str]:
    return text.lower().split()


def _grams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def bleu_ref(candidate: str, references: list[str], n: int) -> float:
    cand = _toks(candidate)
    refs = [_toks(r) for r in references if _toks(r)]
    log_sum = 0.0
    for k in range(1, n + 1):
        cand_grams = _grams(cand, k)
        if not cand_grams:
            log_sum += math.log(EPS)
            continue
        clipped = 0
        for gram in set(cand_grams):
            cand_count = sum(1 for g in cand_grams if g == gram)
            best_ref = 0
            for ref in refs:
                ref_grams = _grams(ref, k)
                count = sum(1 for g in ref_grams if g == gram)
                best_ref = max(best_ref, count)
            clipped += min(cand_count, best_ref)
        precision = clipped / len(cand_grams) if clipped else EPS
        log_sum += math.log(precision)
    c = len(cand)
    best = None
    for ref in refs:
        key = (abs(len(ref) - c), len(ref))
        if best is None or key < best:
            best = key
    r = best[1]
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_sum / n)


def rouge_n_ref(candidate: str, reference: str, n: int) -> tuple[float, float, float]:
    cand_grams = _grams(_toks(candidate), n)
    ref_grams = _grams(_toks(reference), n)
    overlap = 0
    for gram in set(cand_grams):
        overlap += min(
            sum(1 for g in cand_grams if g == gram),
            sum(1 for g in ref_grams if g == gram),
        )
    p = overlap / len(cand_grams) if cand_grams else 0.0
    r = overlap / len(ref_grams) if ref_grams else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def lcs_ref(a: list[str], b: list[str]) -> int:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def rouge_l_ref(candidate: str, reference: str) -> tuple[float, float, float]:
    cand, ref = _toks(candidate), _toks(reference)
    lcs = lcs_ref(cand, ref)
    p = lcs / len(cand) if cand else 0.0
    r = lcs / len(ref) if ref else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def distinct_ref(texts: list[str], n: int) -> float:
    all_grams: list[tuple[str, ...]] = []
    for text in texts:
        all_grams.extend(_grams(_toks(text), n))
    return len(set(all_grams)) / len(all_grams)
