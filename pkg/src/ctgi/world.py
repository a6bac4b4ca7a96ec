"""Synthetic attribute world, deterministic embedders, and the oracle backend.

Identities are unique combinations of one attribute value per category.
Images are stand-ins: the "image embedding" is a normalized multi-hot over
the schema vocabulary, and text embeds by exact attribute-phrase matching.
The oracle chat backend answers every pipeline request truthfully from
ground truth; it registers each caption it produces so alignment judgments
can resolve a query back to the identity it describes. Seeded noise flips
alignment judgments only.
"""

from __future__ import annotations

import json
import threading
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import prompts
from .chat import ChatBackend
from .errors import SchemaTooSmallError, UnknownImageError
from .vectors import Gallery, GalleryItem

CAPTION_STYLES = (
    "A person",
    "The person is",
    "This person is",
    "The image shows a person",
    "Pictured is a person",
    "One person is",
    "The subject is",
    "A pedestrian is",
)

PHRASE_TEMPLATES = {
    "clothing-upper": "wearing {value}",
    "clothing-lower": "wearing {value}",
    "footwear": "wearing {value}",
    "hair": "with {value}",
    "action": "{value}",
    "carried-items": "carrying {value}",
}

ANSWER_TEMPLATES = {
    "clothing-upper": "The person is wearing {value}.",
    "clothing-lower": "The person is wearing {value}.",
    "footwear": "The person is wearing {value}.",
    "hair": "The person has {value}.",
    "action": "The person is {value}.",
    "carried-items": "The person is carrying {value}.",
}

QUESTION_CATEGORY_MARKERS = {
    "upper body": "clothing-upper",
    "lower body": "clothing-lower",
    "footwear": "footwear",
    "accessor": "accessories",
    "hair": "hair",
    "doing": "action",
    "carrying": "carried-items",
}

DONT_KNOW_REPLY = "I don't know."


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered categories, each with a list of unique attribute phrases."""

    categories: tuple[str, ...]
    values: dict[str, tuple[str, ...]]

    def __post_init__(self):
        if len(self.categories) < 4:
            raise ValueError("schema needs at least 4 categories")
        all_values = []
        for category in self.categories:
            options = self.values.get(category, ())
            if len(options) < 3:
                raise ValueError(f"category {category!r} needs at least 3 values")
            all_values.extend(options)
        if len(set(all_values)) != len(all_values):
            raise ValueError("attribute values must be unique across the schema")

    @property
    def vocabulary(self) -> tuple[str, ...]:
        return tuple(
            value for category in self.categories for value in self.values[category]
        )

    @property
    def combination_count(self) -> int:
        count = 1
        for category in self.categories:
            count *= len(self.values[category])
        return count

    def category_of(self, value: str) -> str:
        for category in self.categories:
            if value in self.values[category]:
                return category
        raise KeyError(value)

    def attrs_in_text(self, text: str) -> list[str]:
        """Schema attributes whose token sequence occurs in the text, in
        vocabulary order."""
        words = prompts.tokens(text)
        found = []
        for attr in self.vocabulary:
            needle = prompts.tokens(attr)
            span = len(needle)
            if any(words[i : i + span] == needle for i in range(len(words) - span + 1)):
                found.append(attr)
        return found

    def embed_attributes(self, attrs) -> np.ndarray:
        """Normalized multi-hot over the schema vocabulary."""
        vocab = self.vocabulary
        index = {attr: i for i, attr in enumerate(vocab)}
        vec = np.zeros(len(vocab), dtype=np.float64)
        for attr in attrs:
            vec[index[attr]] = 1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            return vec
        return vec / norm

    def embed_text(self, text: str) -> np.ndarray:
        """Multi-hot of mentioned attributes; all-zero when none occur."""
        return self.embed_attributes(self.attrs_in_text(text))

    def text_embedder(self):
        return self.embed_text

    def to_json(self) -> dict:
        return {category: list(self.values[category]) for category in self.categories}

    @classmethod
    def from_json(cls, record) -> "AttributeSchema":
        return cls(
            categories=tuple(record.keys()),
            values={category: tuple(values) for category, values in record.items()},
        )


DEFAULT_SCHEMA = AttributeSchema(
    categories=(
        "clothing-upper",
        "clothing-lower",
        "footwear",
        "hair",
        "action",
        "carried-items",
    ),
    values={
        "clothing-upper": (
            "red jacket", "blue shirt", "black coat", "green sweater", "white hoodie",
        ),
        "clothing-lower": (
            "blue jeans", "black trousers", "gray shorts", "brown skirt", "khaki pants",
        ),
        "footwear": (
            "white sneakers", "black boots", "brown sandals", "blue shoes", "gray heels",
        ),
        "hair": (
            "short hair", "long hair", "curly hair", "blond hair", "gray hair",
        ),
        "action": ("walking", "running", "standing", "cycling", "sitting"),
        "carried-items": (
            "black backpack", "red handbag", "silver umbrella", "brown suitcase",
            "green tote bag",
        ),
    },
)


def load_schema(path) -> AttributeSchema:
    with open(path, "r", encoding="utf-8") as handle:
        return AttributeSchema.from_json(json.load(handle))


def save_schema(schema: AttributeSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(schema.to_json(), handle, indent=2)
        handle.write("\n")


class World:
    """Generated identities plus the caption provenance registry."""

    def __init__(self, schema: AttributeSchema, gallery: Gallery):
        self.schema = schema
        self.gallery = gallery
        self.truth: dict[str, frozenset[str]] = {}
        self.value_by_category: dict[str, dict[str, str]] = {}
        for item in gallery:
            if item.attributes is None:
                raise ValueError(f"gallery item {item.id!r} lacks attributes")
            self.truth[item.id] = item.attributes
            self.value_by_category[item.id] = {
                schema.category_of(value): value for value in item.attributes
            }
        self._registry: dict[str, str] = {}
        self._registry_lock = threading.Lock()

    def __contains__(self, image_id):
        return image_id in self.truth

    def relevance(self) -> dict[str, set[str]]:
        """Each identity is relevant only to itself."""
        return {image_id: {image_id} for image_id in self.truth}

    def caption_source(self, text: str) -> str | None:
        with self._registry_lock:
            return self._registry.get(text)

    def register_caption(self, attrs, image_id: str) -> str:
        """Render a caption for `attrs`, unique in the registry, owned by
        `image_id`; re-registering an identical caption is a no-op."""
        ordered = [a for a in self.schema.vocabulary if a in set(attrs)]
        base = zlib.crc32(image_id.encode("utf-8"))
        with self._registry_lock:
            for offset in range(len(CAPTION_STYLES)):
                style = (base + offset) % len(CAPTION_STYLES)
                text = render_caption(self.schema, ordered, style)
                owner = self._registry.get(text)
                if owner is None:
                    self._registry[text] = image_id
                    return text
                if owner == image_id:
                    return text
            text = render_caption(self.schema, ordered, base % len(CAPTION_STYLES))
            text += f" Subject {image_id}."
            self._registry.setdefault(text, image_id)
            return text


def render_phrase(schema: AttributeSchema, value: str) -> str:
    category = schema.category_of(value)
    template = PHRASE_TEMPLATES.get(category, "with {value}")
    return template.format(value=value)


def render_caption(schema: AttributeSchema, attrs, style: int) -> str:
    prefix = CAPTION_STYLES[style % len(CAPTION_STYLES)]
    phrases = [render_phrase(schema, value) for value in attrs]
    if not phrases:
        return f"{prefix}."
    return f"{prefix} {', '.join(phrases)}."


def generate_world(seed: int, n_identities: int, schema: AttributeSchema) -> World:
    """Sample identities with distinct attribute combinations, one value per
    category, uniformly per category under the seed."""
    if n_identities < 2:
        raise ValueError("need at least 2 identities")
    if n_identities > schema.combination_count:
        raise SchemaTooSmallError(
            f"{n_identities} identities exceed {schema.combination_count} combinations"
        )
    rng = np.random.default_rng(seed)
    seen: set[tuple[str, ...]] = set()
    items = []
    width = max(4, len(str(n_identities - 1)))
    while len(items) < n_identities:
        combo = tuple(
            schema.values[category][int(rng.integers(len(schema.values[category])))]
            for category in schema.categories
        )
        if combo in seen:
            continue
        seen.add(combo)
        image_id = f"p{len(items):0{width}d}"
        items.append(
            GalleryItem(
                id=image_id,
                embedding=schema.embed_attributes(combo),
                attributes=frozenset(combo),
            )
        )
    return World(schema, Gallery(items))


def save_ground_truth(world: World, path) -> None:
    record = {
        image_id: sorted(attrs) for image_id, attrs in sorted(world.truth.items())
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(record, handle, indent=2, sort_keys=True)
        handle.write("\n")


@dataclass
class OracleConfig:
    seed: int = 0
    yes_no_error_rate: float = 0.1
    caption_attributes: int = 2
    answer_template: str = "{statement}"
    caption_template: str = "{prefix} {details}."
    rephrase_behavior: str = "concatenate-deduplicate"
    noise_table_size: int = 1 << 17

    def __post_init__(self):
        if not 0.0 <= self.yes_no_error_rate <= 1.0:
            raise ValueError("yes_no_error_rate must lie in [0, 1]")
        if self.caption_attributes < 1:
            raise ValueError("caption_attributes must be >= 1")
        if self.rephrase_behavior != "concatenate-deduplicate":
            raise ValueError("only concatenate-deduplicate rephrasing is supported")


class OracleBackend(ChatBackend):
    """Truthful chat backend over a generated world.

    Captioning renders a seeded per-image attribute subset; category and
    attribute questions are answered from ground truth; rephrase/aggregate
    requests concatenate the attribute mentions of their inputs,
    deduplicated. Alignment judgments resolve oracle-generated queries to
    their source identity via the caption registry (attribute containment
    otherwise) and are flipped with the configured error probability from a
    pre-drawn seeded noise table, so concurrent use cannot reorder draws.
    """

    kind = "oracle"

    def __init__(self, world: World, config: OracleConfig | None = None, transcript=None):
        super().__init__(transcript)
        self.world = world
        self.config = config if config is not None else OracleConfig()
        rng = np.random.default_rng(self.config.seed)
        self._noise = rng.random(self.config.noise_table_size)
        self._noise_index = 0
        self._noise_lock = threading.Lock()

    # -- noise ----------------------------------------------------------

    def _next_flip(self) -> bool:
        with self._noise_lock:
            draw = self._noise[self._noise_index % self._noise.size]
            self._noise_index += 1
        return bool(draw < self.config.yes_no_error_rate)

    # -- request dispatch -------------------------------------------------

    def _reply(self, messages):
        message = messages[-1]
        text = message.text
        image_id = message.image_ref
        if "Does the person in the image match this description?" in text:
            return self._judge_alignment(text, image_id)
        if text == prompts.INIT_CAPTION_PROMPT or text.lower().startswith(
            "describe the person"
        ):
            return self._caption(image_id)
        if "Rephrase the description" in text:
            return self._rephrase(text)
        if "Combine them into one refined description" in text:
            return self._aggregate(text)
        category = self._question_category(text)
        if category is not None:
            return self._answer_category(image_id, category)
        mentioned = self.world.schema.attrs_in_text(text)
        if mentioned and image_id is not None:
            return self._answer_presence(image_id, mentioned[0])
        return DONT_KNOW_REPLY

    # -- handlers ---------------------------------------------------------

    def _identity_attrs(self, image_id) -> frozenset[str]:
        if image_id is None or image_id not in self.world:
            raise UnknownImageError(f"unknown image {image_id!r}")
        return self.world.truth[image_id]

    def _caption(self, image_id) -> str:
        attrs = self._identity_attrs(image_id)
        schema = self.world.schema
        per_image = np.random.default_rng(
            [self.config.seed, zlib.crc32(image_id.encode("utf-8"))]
        )
        count = min(self.config.caption_attributes, len(schema.categories))
        chosen_idx = sorted(
            per_image.choice(len(schema.categories), size=count, replace=False).tolist()
        )
        by_category = self.world.value_by_category[image_id]
        chosen = [by_category[schema.categories[i]] for i in chosen_idx]
        return self.world.register_caption(chosen, image_id)

    def _judge_alignment(self, text: str, image_id) -> str:
        attrs = self._identity_attrs(image_id)
        query = text.partition("Description: ")[2].strip()
        source = self.world.caption_source(query)
        if source is not None:
            truthful = image_id == source
        else:
            query_attrs = set(self.world.schema.attrs_in_text(query))
            truthful = query_attrs <= attrs
        verdict = truthful != self._next_flip()
        if verdict:
            return "Yes, this is the person described."
        return "No, this is not the person described."

    def _question_category(self, text: str) -> str | None:
        lowered = text.lower()
        if "?" not in text:
            return None
        for marker, category in QUESTION_CATEGORY_MARKERS.items():
            if marker in lowered and category in self.world.schema.categories:
                return category
        for category in self.world.schema.categories:
            if category.lower() in lowered:
                return category
        return None

    def _answer_category(self, image_id, category: str) -> str:
        self._identity_attrs(image_id)
        value = self.world.value_by_category[image_id].get(category)
        if value is None:
            return DONT_KNOW_REPLY
        template = ANSWER_TEMPLATES.get(category, "The person has {value}.")
        return self.config.answer_template.format(statement=template.format(value=value))

    def _answer_presence(self, image_id, attr: str) -> str:
        attrs = self._identity_attrs(image_id)
        phrase = render_phrase(self.world.schema, attr)
        if attr in attrs:
            statement = f"Yes, the person is {phrase}."
        else:
            statement = f"No, the person is not {phrase}."
        return self.config.answer_template.format(statement=statement)

    def _mentions(self, text: str) -> list[str]:
        return self.world.schema.attrs_in_text(text)

    def _rephrase(self, text: str) -> str:
        attrs = self._mentions(text)
        static = text.partition("Initial description: ")[2].partition(
            "\nAdditional details:"
        )[0].strip()
        source = self.world.caption_source(static)
        if source is not None:
            return self.world.register_caption(attrs, source)
        return render_caption(self.world.schema, attrs, 0)

    def _aggregate(self, text: str) -> str:
        attrs = self._mentions(text)
        return render_caption(self.world.schema, attrs, 0)
