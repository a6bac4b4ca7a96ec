"""Embedding arithmetic, the image gallery, and deterministic top-K ranking.

Similarity is cosine on unit-normalized vectors; galleries normalize their
embeddings once at load so ranking reduces to a dot product. Ties are broken
by ascending item id for reproducibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatchError,
    EmptyGalleryError,
    ParseError,
    ZeroVectorError,
)

NORM_TOL = 1e-9


def as_vector(values) -> np.ndarray:
    """Coerce a sequence into a finite 1-D float64 array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise ValueError("expected a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    return v


def normalize(v) -> np.ndarray:
    """Scale to unit L2 norm, preserving direction."""
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVectorError("cannot normalize an all-zero vector")
    return v / norm


def cosine(u, v) -> float:
    u = as_vector(u)
    v = as_vector(v)
    if u.shape[0] != v.shape[0]:
        raise DimMismatchError(f"dims differ: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class GalleryItem:
    """One identified image: id, embedding, optional ground-truth attributes."""

    id: str
    embedding: np.ndarray
    attributes: frozenset[str] | None = None


class Gallery:
    """Immutable collection of items sharing one embedding dimension.

    Embeddings are normalized at construction; `matrix` stacks them in
    item order for vectorized scoring.
    """

    def __init__(self, items):
        items = list(items)
        if not items:
            raise EmptyGalleryError("gallery has no items")
        dims = {item.embedding.shape[0] for item in items}
        if len(dims) != 1:
            raise DimMismatchError(f"gallery mixes dimensions {sorted(dims)}")
        seen = set()
        for item in items:
            if item.id in seen:
                raise ParseError(f"duplicate gallery id {item.id!r}")
            seen.add(item.id)
        self.items = tuple(
            GalleryItem(item.id, normalize(item.embedding), item.attributes)
            for item in items
        )
        self.ids = tuple(item.id for item in self.items)
        self.dim = self.items[0].embedding.shape[0]
        self.matrix = np.stack([item.embedding for item in self.items])
        self._by_id = {item.id: item for item in self.items}

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __contains__(self, item_id):
        return item_id in self._by_id

    def get(self, item_id) -> GalleryItem:
        return self._by_id[item_id]


@dataclass
class Ranking:
    """Scored items for one query, score descending, ties by ascending id."""

    query_id: str
    entries: list[tuple[str, float]] = field(default_factory=list)

    @classmethod
    def from_scores(cls, query_id, pairs) -> "Ranking":
        ordered = sorted(pairs, key=lambda pair: (-pair[1], pair[0]))
        return cls(query_id=query_id, entries=ordered)

    def validate(self) -> None:
        ids = [item_id for item_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise ParseError(f"ranking {self.query_id!r} repeats an item id")
        for (id_a, score_a), (id_b, score_b) in zip(self.entries, self.entries[1:]):
            if score_b > score_a or (score_b == score_a and id_b < id_a):
                raise ParseError(f"ranking {self.query_id!r} is not sorted")

    def item_ids(self) -> list[str]:
        return [item_id for item_id, _ in self.entries]

    def top(self) -> tuple[str, float]:
        return self.entries[0]


def top_k(query, gallery: Gallery, k: int) -> Ranking:
    """Rank the k best gallery items for the query embedding.

    Returns min(k, len(gallery)) entries; the result is identical to
    scoring every item and sorting.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = as_vector(query)
    if q.shape[0] != gallery.dim:
        raise DimMismatchError(f"query dim {q.shape[0]} != gallery dim {gallery.dim}")
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ZeroVectorError("query embeds to the zero vector")
    scores = gallery.matrix @ (q / norm)
    pairs = [(item_id, float(score)) for item_id, score in zip(gallery.ids, scores)]
    pairs.sort(key=lambda pair: (-pair[1], pair[0]))
    return Ranking(query_id="", entries=pairs[:k])


def rank_all(query, gallery: Gallery, query_id: str = "") -> Ranking:
    ranking = top_k(query, gallery, len(gallery))
    ranking.query_id = query_id
    return ranking


def load_gallery(path) -> Gallery:
    """Read a JSON Lines gallery: {"id", "embedding", "attributes"?} per line."""
    items = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            try:
                item_id = record["id"]
                embedding = record["embedding"]
            except (KeyError, TypeError) as exc:
                raise ParseError(f"line {line_no}: missing id/embedding") from exc
            attrs = record.get("attributes")
            try:
                vec = as_vector(embedding)
            except ValueError as exc:
                raise ParseError(f"line {line_no}: {exc}") from exc
            if items and vec.shape[0] != items[0].embedding.shape[0]:
                raise DimMismatchError(
                    f"line {line_no}: dim {vec.shape[0]} != "
                    f"dim {items[0].embedding.shape[0]} of line 1"
                )
            items.append(
                GalleryItem(
                    id=str(item_id),
                    embedding=vec,
                    attributes=frozenset(attrs) if attrs is not None else None,
                )
            )
    return Gallery(items)


def save_gallery(gallery: Gallery, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for item in gallery:
            record = {"id": item.id, "embedding": [float(x) for x in item.embedding]}
            if item.attributes is not None:
                record["attributes"] = sorted(item.attributes)
            handle.write(json.dumps(record) + "\n")
