"""Retrieval metrics: Rank-k accuracy and mean average precision.

AP convention: mean of precision-at-hit over the relevant items actually
present in the ranking, 0 when none is found. mAP averages AP over queries.
"""

from __future__ import annotations

from .errors import MissingRelevanceError
from .vectors import Ranking


def _check_relevance(rankings, relevant) -> None:
    for ranking in rankings:
        if ranking.query_id not in relevant:
            raise MissingRelevanceError(
                f"no relevance entry for query {ranking.query_id!r}"
            )


def rank_k_accuracy(rankings: list[Ranking], relevant, k: int) -> float:
    """Fraction of queries with at least one relevant item in the top k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _check_relevance(rankings, relevant)
    hits = 0
    for ranking in rankings:
        good = relevant[ranking.query_id]
        if any(item_id in good for item_id, _ in ranking.entries[:k]):
            hits += 1
    return hits / len(rankings)


def average_precision(ranking: Ranking, good) -> float:
    precisions = []
    found = 0
    for position, (item_id, _) in enumerate(ranking.entries, start=1):
        if item_id in good:
            found += 1
            precisions.append(found / position)
    if not precisions:
        return 0.0
    return sum(precisions) / len(precisions)


def mean_average_precision(rankings: list[Ranking], relevant) -> float:
    _check_relevance(rankings, relevant)
    aps = [average_precision(r, relevant[r.query_id]) for r in rankings]
    return sum(aps) / len(aps)
