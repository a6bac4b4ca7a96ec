"""Multi-turn pseudo-caption generation.

Per image: one captioning call, N question-answer rounds drawn from a
question pool, redundancy/relevance filtering, concatenation of the kept
answers, and one rephrasing call that folds everything into the final
caption under a whitespace-token budget.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from . import prompts
from .chat import ChatBackend, user
from .errors import EmptyReplyError, NoKeptTurnsError, ParseError

REJECT_REDUNDANT = "redundant"
REJECT_IRRELEVANT = "irrelevant"
REJECT_EMPTY = "empty"

_SENTENCE_END = re.compile(r"[.?!](?=\s|$)")
_ALPHA = re.compile(r"[a-zA-Z]")


@dataclass(frozen=True)
class QATurn:
    question: str
    answer: str
    kept: bool = False
    reject_reason: str | None = None

    def __post_init__(self):
        if self.kept and self.reject_reason is not None:
            raise ValueError("a kept turn cannot carry a reject_reason")

    def to_json(self) -> dict:
        record = {"q": self.question, "a": self.answer, "kept": self.kept}
        if self.reject_reason is not None:
            record["reject_reason"] = self.reject_reason
        return record

    @classmethod
    def from_json(cls, record) -> "QATurn":
        return cls(
            question=record["q"],
            answer=record["a"],
            kept=record.get("kept", False),
            reject_reason=record.get("reject_reason"),
        )


@dataclass(frozen=True)
class QuestionPool:
    """Ordered attribute-targeted questions with parallel category tags."""

    templates: tuple[str, ...]
    categories: tuple[str, ...]

    def __post_init__(self):
        if not self.templates:
            raise ValueError("question pool is empty")
        if len(self.templates) != len(self.categories):
            raise ValueError("templates and categories must be parallel")
        if len(set(self.templates)) != len(self.templates):
            raise ValueError("question pool repeats a template")

    def __len__(self):
        return len(self.templates)


def load_question_pool(path) -> QuestionPool:
    """One question per line; `#`-prefixed lines set the category tag."""
    templates, categories = [], []
    category = ""
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                category = line.lstrip("#").strip()
                continue
            templates.append(line)
            categories.append(category)
    if not templates:
        raise ParseError(f"question pool {path} has no questions")
    return QuestionPool(templates=tuple(templates), categories=tuple(categories))


def save_question_pool(pool: QuestionPool, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        last_category = None
        for template, category in zip(pool.templates, pool.categories):
            if category != last_category:
                handle.write(f"# {category}\n")
                last_category = category
            handle.write(template + "\n")


def default_question_pool() -> QuestionPool:
    """Two attribute questions plus context questions that filtering drops."""
    entries = (
        ("clothing-lower", "What is the person wearing on their lower body?"),
        ("footwear", "What footwear is the person wearing?"),
        ("context", "What is in the background of the image?"),
        ("context", "What is the weather like in the image?"),
        ("context", "What kind of camera took the picture?"),
        ("context", "What time of day is it in the image?"),
    )
    return QuestionPool(
        templates=tuple(question for _, question in entries),
        categories=tuple(category for category, _ in entries),
    )


@dataclass
class CaptionConfig:
    rounds: int = 6
    redundancy_threshold: float = 0.7
    max_tokens: int = 248
    init_prompt: str = prompts.INIT_CAPTION_PROMPT
    rephrase_prompt: str = prompts.REPHRASE_PROMPT
    dont_know_patterns: tuple[str, ...] = prompts.DONT_KNOW_PATTERNS

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 <= self.redundancy_threshold <= 1.0:
            raise ValueError("redundancy_threshold must lie in [0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass
class PseudoLabel:
    image_id: str
    static_caption: str
    turns: list[QATurn] = field(default_factory=list)
    enriched_caption: str = ""
    final_caption: str = ""
    token_budget_applied: bool = False

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "static": self.static_caption,
            "turns": [turn.to_json() for turn in self.turns],
            "enriched": self.enriched_caption,
            "final": self.final_caption,
            "token_budget_applied": self.token_budget_applied,
        }

    @classmethod
    def from_json(cls, record) -> "PseudoLabel":
        return cls(
            image_id=record["image_id"],
            static_caption=record["static"],
            turns=[QATurn.from_json(turn) for turn in record.get("turns", [])],
            enriched_caption=record.get("enriched", ""),
            final_caption=record["final"],
            token_budget_applied=record.get("token_budget_applied", False),
        )


def word_set_jaccard(a: str, b: str) -> float:
    """Jaccard similarity of lowercased alphanumeric token sets."""
    set_a, set_b = set(prompts.tokens(a)), set(prompts.tokens(b))
    if not set_a and not set_b:
        return 1.0
    if not set_a or not set_b:
        return 0.0
    return len(set_a & set_b) / len(set_a | set_b)


def initial_caption(image_id: str, backend: ChatBackend, cfg: CaptionConfig) -> str:
    reply = backend.chat([user(cfg.init_prompt, image_ref=image_id)])
    if not reply.strip():
        raise EmptyReplyError(f"empty caption for image {image_id!r}")
    return reply


def qa_round(image_id: str, question: str, backend: ChatBackend) -> QATurn:
    answer = backend.chat([user(question, image_ref=image_id)])
    return QATurn(question=question, answer=answer)


def filter_turns(turns: list[QATurn], cfg: CaptionConfig) -> list[QATurn]:
    """Mark every turn kept or rejected (empty / irrelevant / redundant).

    A turn is redundant when its answer's word-set Jaccard similarity with
    any earlier kept answer reaches the threshold. Order is preserved.
    """
    result: list[QATurn] = []
    kept_answers: list[str] = []
    for turn in turns:
        if _ALPHA.search(turn.answer) is None:
            result.append(replace(turn, kept=False, reject_reason=REJECT_EMPTY))
            continue
        lowered = turn.answer.lower()
        if any(pattern in lowered for pattern in cfg.dont_know_patterns):
            result.append(replace(turn, kept=False, reject_reason=REJECT_IRRELEVANT))
            continue
        if any(
            word_set_jaccard(turn.answer, earlier) >= cfg.redundancy_threshold
            for earlier in kept_answers
        ):
            result.append(replace(turn, kept=False, reject_reason=REJECT_REDUNDANT))
            continue
        result.append(replace(turn, kept=True, reject_reason=None))
        kept_answers.append(turn.answer)
    return result


def enrich(turns: list[QATurn]) -> str:
    """Join kept answers in round order with single spaces."""
    kept = [turn.answer for turn in turns if turn.kept]
    if not kept:
        raise NoKeptTurnsError("no kept turns to enrich from")
    return " ".join(kept)


def truncate_to_budget(text: str, max_tokens: int) -> tuple[str, bool]:
    """Cut at the last sentence boundary within the whitespace-token budget.

    Falls back to a hard token cut when no sentence boundary fits.
    """
    if len(text.split()) <= max_tokens:
        return text, False
    best = None
    for match in _SENTENCE_END.finditer(text):
        candidate = text[: match.end()]
        if len(candidate.split()) <= max_tokens:
            best = candidate
        else:
            break
    if best is None:
        best = " ".join(text.split()[:max_tokens])
    return best, True


def reconstruct(
    enriched: str, static_caption: str, backend: ChatBackend, cfg: CaptionConfig
) -> tuple[str, bool]:
    """Rephrase static + enriched into the final caption.

    Returns (caption, budget_applied); the rendered prompt contains both
    inputs verbatim.
    """
    if not enriched or not static_caption:
        raise ValueError("reconstruct requires nonempty inputs")
    prompt = cfg.rephrase_prompt.format(static=static_caption, enriched=enriched)
    reply = backend.chat([user(prompt)])
    if not reply.strip():
        raise EmptyReplyError("empty rephrase reply")
    return truncate_to_budget(reply, cfg.max_tokens)


def generate_pseudo_label(
    image_id: str,
    pool: QuestionPool,
    cfg: CaptionConfig,
    backend: ChatBackend,
) -> PseudoLabel:
    """Run the full caption pipeline for one image.

    When every turn is rejected the final caption falls back to the static
    one and no rephrase call is made.
    """
    static = initial_caption(image_id, backend, cfg)
    turns = [
        qa_round(image_id, question, backend)
        for question in pool.templates[: cfg.rounds]
    ]
    turns = filter_turns(turns, cfg)
    if any(turn.kept for turn in turns):
        enriched = enrich(turns)
        final, budget_applied = reconstruct(enriched, static, backend, cfg)
    else:
        enriched = ""
        final, budget_applied = truncate_to_budget(static, cfg.max_tokens)
    return PseudoLabel(
        image_id=image_id,
        static_caption=static,
        turns=turns,
        enriched_caption=enriched,
        final_caption=final,
        token_budget_applied=budget_applied,
    )


def generate_captions(
    image_ids,
    pool: QuestionPool,
    cfg: CaptionConfig,
    backend: ChatBackend,
    jobs: int = 1,
) -> list[PseudoLabel]:
    """Pseudo-labels for many images, returned ordered by image id.

    With jobs > 1 images run concurrently; each image's pipeline stays
    strictly sequential, and the ordered assembly keeps output files
    deterministic regardless of completion order.
    """
    ordered = sorted(image_ids)
    if jobs <= 1:
        labels = [generate_pseudo_label(i, pool, cfg, backend) for i in ordered]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool_executor:
            labels = list(
                pool_executor.map(
                    lambda image_id: generate_pseudo_label(image_id, pool, cfg, backend),
                    ordered,
                )
            )
    return labels


def save_caption_store(labels: list[PseudoLabel], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for label in labels:
            handle.write(json.dumps(label.to_json()) + "\n")


def load_caption_store(path) -> list[PseudoLabel]:
    labels = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(PseudoLabel.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"line {line_no}: bad caption record") from exc
    return labels
