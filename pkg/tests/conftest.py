from __future__ import annotations

import numpy as np
import pytest

from ctgi.vectors import Gallery, GalleryItem, Ranking


def make_gallery(vectors: dict[str, list[float]], attributes=None) -> Gallery:
    attributes = attributes or {}
    return Gallery(
        GalleryItem(
            id=item_id,
            embedding=np.asarray(vector, dtype=np.float64),
            attributes=frozenset(attributes[item_id]) if item_id in attributes else None,
        )
        for item_id, vector in vectors.items()
    )


def ranking_from_order(query_id: str, ordered_ids, start=1.0, step=0.01) -> Ranking:
    entries = [
        (item_id, start - index * step) for index, item_id in enumerate(ordered_ids)
    ]
    return Ranking(query_id=query_id, entries=entries)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
