"""Accuracy, bag-of-token F1, and precision/recall over ranked entity pairs."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence


class MetricError(ValueError):
    pass


def accuracy(predictions: Sequence, golds: Sequence) -> float:
    if len(predictions) != len(golds):
        raise MetricError("predictions and golds differ in length")
    if not golds:
        raise MetricError("accuracy of an empty set")
    return sum(p == g for p, g in zip(predictions, golds)) / len(golds)


def token_f1(pred_tokens: Iterable[Hashable], gold_tokens: Iterable[Hashable]) -> tuple[float, float, float]:
    """Multiset precision, recall and F1 of predicted against gold tokens."""
    pred, gold = Counter(pred_tokens), Counter(gold_tokens)
    if not gold:
        raise MetricError("gold token bag is empty")
    overlap = sum((pred & gold).values())
    precision = overlap / sum(pred.values()) if pred else 0.0
    recall = overlap / sum(gold.values())
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class PrPoint:
    t: int
    precision: float
    recall: float
    hits: int


def rank_pairs(scores: Mapping[Hashable, float]) -> list:
    """Pairs by descending score, ties by ascending pair id."""
    return sorted(scores, key=lambda pair: (-scores[pair], pair))


def pr_curve(scores: Mapping[Hashable, float], positives: Iterable[Hashable]) -> list[PrPoint]:
    """Precision_t and Recall_t for the top-t pairs, t = 1..len(scores)."""
    positives = set(positives)
    if not positives:
        raise MetricError("the positive set is empty")
    points, hits = [], 0
    for t, pair in enumerate(rank_pairs(scores), 1):
        hits += pair in positives
        points.append(PrPoint(t, hits / t, hits / len(positives), hits))
    return points


def average_precision(points: Sequence[PrPoint]) -> float:
    """Area under the step PR curve: sum of precision at each recall increment."""
    area, prev_recall = 0.0, 0.0
    for p in points:
        if p.recall > prev_recall:
            area += p.precision * (p.recall - prev_recall)
            prev_recall = p.recall
    return area


def precision_at_recall(points: Sequence[PrPoint], min_recall: float) -> float:
    """Best precision among points whose recall reaches ``min_recall`` (0 if none)."""
    return max((p.precision for p in points if p.recall >= min_recall), default=0.0)


def pr_csv(points: Sequence[PrPoint]) -> str:
    lines = ["t,precision,recall"]
    lines += [f"{p.t},{p.precision!r},{p.recall!r}" for p in points]
    return "\n".join(lines) + "\n"


def parse_pr_csv(text: str) -> list[tuple[int, float, float]]:
    rows = text.strip().splitlines()
    if rows[0] != "t,precision,recall":
        raise MetricError("unexpected PR CSV header")
    out = []
    for row in rows[1:]:
        t, p, r = row.split(",")
        out.append((int(t), float(p), float(r)))
    return out
