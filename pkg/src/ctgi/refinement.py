"""Inference-time query refinement with fused re-ranking.

Per query: rank the gallery, optionally early-stop on a confirmed high
top-1, walk the top-K candidates for the first backend-confirmed anchor,
ask the anchor diagnostic questions about attribute categories the query
does not mention, merge the answers into a refined query, and re-rank by
a convex fusion of original and refined similarities with the anchor's
score pinned to 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import prompts
from .captioning import QATurn
from .chat import ChatBackend, YesNo, parse_yes_no, user
from .errors import EmptyReplyError, ItemSetMismatchError, ParseError
from .vectors import Gallery, Ranking, rank_all, top_k


@dataclass
class SearchConfig:
    top_k: int = 20
    fusion_lambda: float = 0.5
    early_stop_xi: float = 0.85
    diagnostic_templates: tuple[tuple[str, str], ...] = prompts.DIAGNOSTIC_TEMPLATES
    max_diagnostics: int = 6
    category_lexicon: dict = field(default_factory=lambda: dict(prompts.CATEGORY_LEXICON))
    alignment_prompt: str = prompts.ALIGNMENT_PROMPT
    aggregation_prompt: str = prompts.AGGREGATION_PROMPT

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0.0 <= self.fusion_lambda <= 1.0:
            raise ValueError("fusion_lambda must lie in [0, 1]")
        if not 0.0 <= self.early_stop_xi <= 1.0:
            raise ValueError("early_stop_xi must lie in [0, 1]")
        if self.max_diagnostics < 1:
            raise ValueError("max_diagnostics must be >= 1")
        if not self.diagnostic_templates:
            raise ValueError("diagnostic_templates must be nonempty")


@dataclass
class RefinementSession:
    query_id: str
    original_query: str
    initial_ranking: Ranking
    anchor_id: str | None = None
    anchor_probe_count: int = 0
    diagnostics: list[QATurn] = field(default_factory=list)
    vqa_summary: str = ""
    refined_query: str | None = None
    final_ranking: Ranking | None = None
    early_stopped: bool = False

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "original_query": self.original_query,
            "initial_ranking": _ranking_to_json(self.initial_ranking),
            "anchor_id": self.anchor_id,
            "anchor_probe_count": self.anchor_probe_count,
            "diagnostics": [
                {
                    "question": turn.question,
                    "answer": turn.answer,
                    "kept": turn.kept,
                }
                for turn in self.diagnostics
            ],
            "vqa_summary": self.vqa_summary,
            "refined_query": self.refined_query,
            "final_ranking": _ranking_to_json(self.final_ranking),
            "early_stopped": self.early_stopped,
        }


def _ranking_to_json(ranking: Ranking | None):
    if ranking is None:
        return None
    return {
        "query_id": ranking.query_id,
        "entries": [[item_id, score] for item_id, score in ranking.entries],
    }


def save_session_log(sessions, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for session in sessions:
            handle.write(json.dumps(session.to_json()) + "\n")


def load_session_log(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: bad session record") from exc
    return records


def ask_alignment(
    query_text: str, candidate_id: str, backend: ChatBackend, cfg: SearchConfig
) -> YesNo:
    prompt = cfg.alignment_prompt.format(query=query_text)
    return parse_yes_no(backend.chat([user(prompt, image_ref=candidate_id)]))


def find_anchor(
    query_text: str,
    query_emb,
    gallery: Gallery,
    cfg: SearchConfig,
    backend: ChatBackend,
) -> tuple[str | None, int]:
    """Walk the top-K candidates; the first affirmed one becomes the anchor.

    Ambiguous replies count as negatives. Returns (anchor_id or None, probes).
    """
    candidates = top_k(query_emb, gallery, cfg.top_k)
    probes = 0
    for item_id, _ in candidates.entries:
        probes += 1
        if ask_alignment(query_text, item_id, backend, cfg) is YesNo.AFFIRMATIVE:
            return item_id, probes
    return None, probes


def diagnostic_questions(query_text: str, cfg: SearchConfig) -> list[str]:
    """Templates for attribute categories the query does not mention yet."""
    covered = prompts.mentioned_categories(query_text, cfg.category_lexicon)
    selected = [
        question
        for category, question in cfg.diagnostic_templates
        if category not in covered
    ]
    return selected[: cfg.max_diagnostics]


def visual_qa(
    anchor_id: str, questions: list[str], backend: ChatBackend
) -> tuple[str, list[QATurn]]:
    """Ask each question against the anchor image; join non-empty answers."""
    if not questions:
        raise ValueError("visual_qa requires at least one question")
    turns = []
    for question in questions:
        answer = backend.chat([user(question, image_ref=anchor_id)])
        turns.append(
            QATurn(
                question=question,
                answer=answer,
                kept=bool(answer.strip()),
                reject_reason=None if answer.strip() else "empty",
            )
        )
    summary = " ".join(turn.answer for turn in turns if turn.answer.strip())
    return summary, turns


def aggregate_query(
    vqa_summary: str, original_query: str, backend: ChatBackend, cfg: SearchConfig
) -> str:
    """Merge the diagnostic summary into the query via the backend.

    An empty summary short-circuits to the original query with no call.
    """
    if not original_query:
        raise ValueError("original_query must be nonempty")
    if not vqa_summary.strip():
        return original_query
    prompt = cfg.aggregation_prompt.format(query=original_query, details=vqa_summary)
    reply = backend.chat([user(prompt)])
    if not reply.strip():
        raise EmptyReplyError("empty aggregation reply")
    return reply


def fuse_scores(
    initial: Ranking, refined: Ranking, anchor_id: str | None, fusion_lambda: float
) -> Ranking:
    """Convex score fusion with the anchor pinned to exactly 1.0.

    fused = lambda * initial + (1 - lambda) * refined, re-sorted with the
    standard tie-break.
    """
    if not 0.0 <= fusion_lambda <= 1.0:
        raise ValueError("fusion_lambda must lie in [0, 1]")
    initial_scores = dict(initial.entries)
    refined_scores = dict(refined.entries)
    if set(initial_scores) != set(refined_scores):
        raise ItemSetMismatchError("rankings cover different item sets")
    if anchor_id is not None and anchor_id not in initial_scores:
        raise ItemSetMismatchError(f"anchor {anchor_id!r} not in the ranked set")
    fused = {
        item_id: fusion_lambda * score + (1.0 - fusion_lambda) * refined_scores[item_id]
        for item_id, score in initial_scores.items()
    }
    if anchor_id is not None:
        fused[anchor_id] = 1.0
    return Ranking.from_scores(initial.query_id, fused.items())


def search(
    query_text: str,
    gallery: Gallery,
    cfg: SearchConfig,
    backend: ChatBackend,
    text_embedder,
    query_id: str = "",
) -> RefinementSession:
    """Full refinement search for one query; every step lands in the session.

    The early-stop check runs before anchor search: a top-1 initial score at
    or above the threshold plus a backend confirmation returns immediately.
    A refined query that embeds to the zero vector abandons the refined
    similarities (the anchor pin still applies).
    """
    query_emb = text_embedder(query_text)
    initial = rank_all(query_emb, gallery, query_id=query_id)
    session = RefinementSession(
        query_id=query_id,
        original_query=query_text,
        initial_ranking=initial,
        final_ranking=initial,
    )
    top_id, top_score = initial.top()
    if top_score >= cfg.early_stop_xi:
        if ask_alignment(query_text, top_id, backend, cfg) is YesNo.AFFIRMATIVE:
            session.early_stopped = True
            return session
    anchor_id, probes = find_anchor(query_text, query_emb, gallery, cfg, backend)
    session.anchor_probe_count = probes
    if anchor_id is None:
        return session
    session.anchor_id = anchor_id
    questions = diagnostic_questions(query_text, cfg)
    if questions:
        summary, turns = visual_qa(anchor_id, questions, backend)
        session.vqa_summary = summary
        session.diagnostics = turns
    else:
        summary = ""
    refined = aggregate_query(summary, query_text, backend, cfg)
    session.refined_query = refined
    refined_emb = text_embedder(refined)
    if not np.any(np.asarray(refined_emb, dtype=np.float64)):
        session.final_ranking = fuse_scores(initial, initial, anchor_id, 1.0)
        return session
    refined_ranking = rank_all(refined_emb, gallery, query_id=query_id)
    session.final_ranking = fuse_scores(
        initial, refined_ranking, anchor_id, cfg.fusion_lambda
    )
    return session
