"""Similarity scores between token sequences, all in [0, 1]."""
from __future__ import annotations

from collections import Counter
from typing import Sequence


def token_f1(pred: Sequence[str], target: Sequence[str]) -> float:
    """Multiset token F1. Two empty sequences score 1, one empty sequence 0."""
    if not pred and not target:
        return 1.0
    if not pred or not target:
        return 0.0
    overlap = sum((Counter(pred) & Counter(target)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(target)
    return 2 * precision * recall / (precision + recall)


def levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def normalized_levenshtein(pred: Sequence[str], target: Sequence[str]) -> float:
    """1 - edit_distance / max(len); two empty sequences score 1."""
    longest = max(len(pred), len(target))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(pred, target) / longest


SIMILARITIES = {"token_f1": token_f1, "levenshtein": normalized_levenshtein}
