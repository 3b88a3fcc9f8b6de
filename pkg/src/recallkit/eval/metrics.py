"""Answer-quality and ranking metrics."""

from __future__ import annotations

import math
import string
from collections import Counter
from typing import Iterable, Sequence

_PUNCT = str.maketrans({c: " " for c in string.punctuation})


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return text.lower().translate(_PUNCT).split()


def token_f1(predicted: str, gold: str) -> float:
    """F1 over token multisets. Both empty gives 1.0, exactly one empty gives 0.0."""
    pred, ref = normalize_tokens(predicted), normalize_tokens(gold)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def bleu1(predicted: str, gold: str) -> float:
    """Clipped unigram precision times the brevity penalty exp(min(0, 1 - |gold|/|pred|))."""
    pred, ref = normalize_tokens(predicted), normalize_tokens(gold)
    if not pred:
        return 0.0
    clipped = sum((Counter(pred) & Counter(ref)).values())
    precision = clipped / len(pred)
    bp = math.exp(min(0.0, 1.0 - len(ref) / len(pred)))
    return precision * bp


def rank_metrics(retrieved: Sequence[str], relevant: Iterable[str], k: int) -> dict[str, float]:
    """Binary-relevance metrics over the top-k cut of ``retrieved``.

    Each relevant id counts once even if it is retrieved twice.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = set(relevant)
    zeros = {"hit_at_k": 0.0, "mrr": 0.0, "ndcg": 0.0, "precision_at_k": 0.0, "recall_at_k": 0.0, "f1_at_k": 0.0}
    if not rel:
        return zeros
    seen: set[str] = set()
    dcg = 0.0
    first = 0
    for i, rid in enumerate(retrieved[:k]):
        if rid in rel and rid not in seen:
            seen.add(rid)
            dcg += 1.0 / math.log2(i + 2)
            if not first:
                first = i + 1
    if not seen:
        return zeros
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(len(rel), k)))
    p = len(seen) / k
    r = len(seen) / len(rel)
    return {
        "hit_at_k": 1.0,
        "mrr": 1.0 / first,
        "ndcg": dcg / idcg,
        "precision_at_k": p,
        "recall_at_k": r,
        "f1_at_k": 2 * p * r / (p + r),
    }
