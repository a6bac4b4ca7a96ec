"""Prompt templates and the attribute-category lexicon.

Both pipelines render chat requests from these templates, and the simulation
oracle recognizes request kinds by the same markers, so engine and oracle
stay in sync. Overriding a template is allowed but may blind the oracle.
"""

from __future__ import annotations

import re

INIT_CAPTION_PROMPT = "Describe the person in the image."

REPHRASE_PROMPT = (
    "Initial description: {static}\n"
    "Additional details: {enriched}\n"
    "Rephrase the description using all the above information."
)

ALIGNMENT_PROMPT = (
    "Does the person in the image match this description? Answer yes or no.\n"
    "Description: {query}"
)

AGGREGATION_PROMPT = (
    "Original description: {query}\n"
    "New details: {details}\n"
    "Combine them into one refined description of the person."
)

# Diagnostic questions, one per attribute category, in fixed priority order.
DIAGNOSTIC_TEMPLATES: tuple[tuple[str, str], ...] = (
    ("clothing-upper", "What is the person wearing on their upper body?"),
    ("clothing-lower", "What is the person wearing on their lower body?"),
    ("footwear", "What footwear is the person wearing?"),
    ("accessories", "What accessories does the person have?"),
    ("hair", "What is the person's hair like?"),
    ("action", "What is the person doing?"),
    ("carried-items", "What is the person carrying?"),
)

# Keywords that mark a category as already mentioned in a query.
CATEGORY_LEXICON: dict[str, tuple[str, ...]] = {
    "clothing-upper": (
        "jacket", "shirt", "coat", "sweater", "hoodie", "blouse", "top",
    ),
    "clothing-lower": (
        "jeans", "trousers", "pants", "shorts", "skirt", "dress",
    ),
    "footwear": (
        "sneakers", "boots", "sandals", "shoes", "heels", "footwear",
    ),
    "accessories": (
        "hat", "glasses", "scarf", "watch", "belt", "cap",
    ),
    "hair": ("hair", "bald", "ponytail"),
    "action": (
        "walking", "running", "standing", "sitting", "cycling", "riding",
    ),
    "carried-items": (
        "backpack", "handbag", "umbrella", "suitcase", "bag", "phone",
    ),
}

DONT_KNOW_PATTERNS: tuple[str, ...] = (
    "i don't know",
    "i do not know",
    "cannot tell",
    "can't tell",
    "not sure",
    "no idea",
    "does not show",
)

_WORD = re.compile(r"[a-z0-9]+")


def tokens(text: str) -> list[str]:
    """Lowercased alphanumeric tokens."""
    return _WORD.findall(text.lower())


def mentioned_categories(text: str, lexicon=None) -> set[str]:
    """Categories whose lexicon keywords occur as words in the text."""
    lexicon = lexicon if lexicon is not None else CATEGORY_LEXICON
    words = set(tokens(text))
    return {
        category
        for category, keywords in lexicon.items()
        if any(keyword in words for keyword in keywords)
    }


def render_rephrase(static: str, enriched: str) -> str:
    return REPHRASE_PROMPT.format(static=static, enriched=enriched)


def render_alignment(query: str) -> str:
    return ALIGNMENT_PROMPT.format(query=query)


def render_aggregation(query: str, details: str) -> str:
    return AGGREGATION_PROMPT.format(query=query, details=details)
