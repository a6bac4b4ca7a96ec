"""Independent brute-force reference implementations used as test oracles.

Deliberately written in plain Python (no numpy, no imports from the
package under test) so that agreement with the engine is meaningful.
"""

from __future__ import annotations

import math


def brute_cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return dot / (nu * nv)


def brute_rank(query, items):
    """Full ranking of (id, vector) pairs: score desc, id asc on ties."""
    scored = [(item_id, brute_cosine(query, vec)) for item_id, vec in items]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


def brute_top_k(query, items, k):
    return brute_rank(query, items)[:k]


def brute_rank_k_accuracy(rankings, relevant, k):
    """rankings: {query_id: [item_id, ...] in rank order}."""
    hits = 0
    for query_id, ranked_ids in rankings.items():
        good = relevant[query_id]
        if any(item_id in good for item_id in ranked_ids[:k]):
            hits += 1
    return hits / len(rankings)


def brute_average_precision(ranked_ids, good):
    """Mean of precision-at-hit over hits found in the ranking; 0 if none."""
    precisions = []
    found = 0
    for position, item_id in enumerate(ranked_ids, start=1):
        if item_id in good:
            found += 1
            precisions.append(found / position)
    if not precisions:
        return 0.0
    return sum(precisions) / len(precisions)


def brute_map(rankings, relevant):
    aps = [
        brute_average_precision(ranked_ids, relevant[query_id])
        for query_id, ranked_ids in rankings.items()
    ]
    return sum(aps) / len(aps)


def brute_affine_row(coeff, intercept, position):
    """Row of an affine-in-position matrix: coeff * position + intercept."""
    return [a * position + b for a, b in zip(coeff, intercept)]


def brute_source_position(pos, n_keep, n_src, n_dst):
    if pos <= n_keep:
        return float(pos)
    return n_keep + (pos - n_keep) * (n_src - n_keep) / (n_dst - n_keep)
