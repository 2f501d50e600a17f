"""ROUGE-1/2/Lsum scoring and whitespace normalization of generated text.

Tokenization is deliberately fixed and simple: lowercase, split on
whitespace, strip non-alphanumeric edge characters. ROUGE-Lsum is the
summary-level variant: per reference sentence, the union of LCS matches
against the candidate sentences, clipped by candidate token counts.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: float, cand_total: float, ref_total: float) -> "RougeScore":
        p = overlap / cand_total if cand_total > 0 else 0.0
        r = overlap / ref_total if ref_total > 0 else 0.0
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        return cls(p, r, f)


_EDGE_STRIP = re.compile(r"^[^0-9a-z]+|[^0-9a-z]+$")


def _tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        tok = _EDGE_STRIP.sub("", raw)
        if tok:
            tokens.append(tok)
    return tokens


def _split_sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+|\n+", text)
    return [p for p in parts if p.strip()]


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap precision/recall/F1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _tokenize(candidate)
    ref = _tokenize(reference)

    def ngrams(tokens):
        return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))

    cgrams, rgrams = ngrams(cand), ngrams(ref)
    overlap = sum(min(cnt, rgrams[g]) for g, cnt in cgrams.items())
    return RougeScore.from_counts(overlap, sum(cgrams.values()), sum(rgrams.values()))


def _lcs_hit_positions(ref: list[str], cand: list[str]) -> set[int]:
    """Positions in `ref` matched by a longest common subsequence with `cand`."""
    n, m = len(ref), len(cand)
    if n == 0 or m == 0:
        return set()
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if ref[i - 1] == cand[j - 1]:
                dp[i][j] = dp[i - 1][j - 1] + 1
            else:
                dp[i][j] = max(dp[i - 1][j], dp[i][j - 1])
    hits = set()
    i, j = n, m
    while i > 0 and j > 0:
        if ref[i - 1] == cand[j - 1]:
            hits.add(i - 1)
            i -= 1
            j -= 1
        elif dp[i - 1][j] >= dp[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return hits


def rouge_lsum(candidate: str, reference: str) -> RougeScore:
    """Summary-level LCS ROUGE.

    For each reference sentence, matched tokens are the union of LCS hits
    against every candidate sentence; total hits are clipped against the
    candidate token multiset so repeated tokens are not double-counted.
    """
    cand_sents = [_tokenize(s) for s in _split_sentences(candidate)]
    ref_sents = [_tokenize(s) for s in _split_sentences(reference)]
    cand_tokens = [t for s in cand_sents for t in s]
    ref_tokens = [t for s in ref_sents for t in s]
    if not cand_tokens or not ref_tokens:
        return RougeScore(0.0, 0.0, 0.0)

    cand_budget = Counter(cand_tokens)
    hits = 0
    for ref_sent in ref_sents:
        matched: set[int] = set()
        for cand_sent in cand_sents:
            matched |= _lcs_hit_positions(ref_sent, cand_sent)
        for pos in matched:
            tok = ref_sent[pos]
            if cand_budget[tok] > 0:
                cand_budget[tok] -= 1
                hits += 1
    return RougeScore.from_counts(hits, len(cand_tokens), len(ref_tokens))


def score_corpus(candidates: list[str], references: list[str]) -> dict:
    """Per-example and corpus-mean ROUGE report, JSON-serializable."""
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    per_example = []
    for cand, ref in zip(candidates, references):
        per_example.append(
            {
                "rouge1": vars(rouge_n(cand, ref, 1)),
                "rouge2": vars(rouge_n(cand, ref, 2)),
                "rougeLsum": vars(rouge_lsum(cand, ref)),
            }
        )
    means = {}
    for metric in ("rouge1", "rouge2", "rougeLsum"):
        means[metric] = {
            k: sum(e[metric][k] for e in per_example) / max(len(per_example), 1)
            for k in ("precision", "recall", "f1")
        }
    return {"examples": per_example, "mean": means}


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


# -- whitespace normalization ---------------------------------------------------

_OPEN_PAREN = re.compile(r"\( +")
_CLOSE_PAREN = re.compile(r" +\)")
_HYPHEN = re.compile(r"(?<=[0-9A-Za-z]) *- *(?=[0-9A-Za-z])")
_APOSTROPHE_S = re.compile(r"'s(?=[A-Za-z])")


def normalize_whitespace(text: str) -> str:
    """Tidy generation-time spacing artifacts; idempotent.

    Removes spaces just inside round brackets and around hyphens that join
    alphanumerics, and inserts a space after an 's clitic glued to the next
    word.
    """
    text = _OPEN_PAREN.sub("(", text)
    text = _CLOSE_PAREN.sub(")", text)
    text = _HYPHEN.sub("-", text)
    text = _APOSTROPHE_S.sub("'s ", text)
    return text
