"""Self-contained ROUGE-1/2/L precision, recall, and F1.

Token sequences come from :mod:`kgrag.tokens`, whose default scheme treats
each CJK codepoint as one token, so Japanese and English answers score under
the same rules. ROUGE-L uses a plain sentence-level LCS over the whole
sequence. No stemming, no stopword removal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .tokens import DEFAULT_SCHEME, tokenize

__all__ = ["RougeScore", "rouge_n", "rouge_l", "lcs_length", "rouge_scores"]


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _score(overlap: float, candidate_total: int, reference_total: int) -> RougeScore:
    p = overlap / candidate_total if candidate_total > 0 else 0.0
    r = overlap / reference_total if reference_total > 0 else 0.0
    f1 = (2 * p * r) / (p + r) if (p + r) > 0 else 0.0
    return RougeScore(precision=p, recall=r, f1=f1)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: list[str], reference: list[str], n: int) -> RougeScore:
    """Clipped n-gram overlap score; n must be 1 or 2."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    cand_grams = _ngrams(candidate, n)
    ref_grams = _ngrams(reference, n)
    overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
    return _score(overlap, sum(cand_grams.values()), sum(ref_grams.values()))


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest-common-subsequence length, O(len(a) * len(b)) rolling DP."""
    if not a or not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[len(b)]


def rouge_l(candidate: list[str], reference: list[str]) -> RougeScore:
    """LCS-based score with beta=1."""
    return _score(lcs_length(candidate, reference), len(candidate), len(reference))


def rouge_scores(
    candidate_text: str, reference_text: str, scheme: str = DEFAULT_SCHEME
) -> dict[str, RougeScore]:
    """ROUGE-1/2/L for raw texts under one tokenization scheme."""
    cand = tokenize(candidate_text, scheme)
    ref = tokenize(reference_text, scheme)
    return {
        "rouge1": rouge_n(cand, ref, 1),
        "rouge2": rouge_n(cand, ref, 2),
        "rougeL": rouge_l(cand, ref),
    }
