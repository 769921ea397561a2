"""ROUGE-1/2/L on lowercased, punctuation-stripped whitespace tokens."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_NON_WORD = re.compile(r"[\W_]+", re.UNICODE)


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def tokenize(text: str) -> list[str]:
    return _NON_WORD.sub(" ", text.lower()).split()


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n_tokens(cand: Sequence[str], ref: Sequence[str], n: int) -> RougeScore:
    c = ngram_counts(cand, n)
    r = ngram_counts(ref, n)
    c_total = sum(c.values())
    r_total = sum(r.values())
    if r_total == 0 and c_total == 0:
        # both too short to form an n-gram: fall back to exact token equality
        same = 1.0 if list(cand) == list(ref) and len(ref) > 0 else 0.0
        return RougeScore(same, same, same)
    overlap = sum((c & r).values())
    p = overlap / c_total if c_total else 0.0
    rec = overlap / r_total if r_total else 0.0
    return RougeScore(p, rec, _f1(p, rec))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_tokens(cand: Sequence[str], ref: Sequence[str]) -> RougeScore:
    lcs = lcs_length(cand, ref)
    p = lcs / len(cand) if cand else 0.0
    r = lcs / len(ref) if ref else 0.0
    return RougeScore(p, r, _f1(p, r))


def _check_reference(reference: str) -> list[str]:
    tokens = tokenize(reference)
    if not tokens:
        raise ValueError("reference summary is empty")
    return tokens


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in {{1, 2}}, got {n}")
    ref = _check_reference(reference)
    return rouge_n_tokens(tokenize(candidate), ref, n)


def rouge_l(candidate: str, reference: str) -> RougeScore:
    ref = _check_reference(reference)
    return rouge_l_tokens(tokenize(candidate), ref)


def rouge_all(candidate: str, reference: str) -> dict[str, RougeScore]:
    """R-1, R-2 and R-L for one pair, keyed ``rouge1``/``rouge2``/``rougeL``."""
    ref = _check_reference(reference)
    cand = tokenize(candidate)
    return {
        "rouge1": rouge_n_tokens(cand, ref, 1),
        "rouge2": rouge_n_tokens(cand, ref, 2),
        "rougeL": rouge_l_tokens(cand, ref),
    }
