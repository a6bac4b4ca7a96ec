"""Four-arm ablation over a synthetic world.

Arms: baseline (static captions as queries, plain ranking), caption
enrichment only, query refinement only, and both combined. Rank-1/5/10 and
mAP are reported per arm; everything is deterministic under the seeds.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

from .captioning import CaptionConfig, QuestionPool, default_question_pool, generate_captions
from .metrics import mean_average_precision, rank_k_accuracy
from .refinement import SearchConfig, search
from .vectors import rank_all
from .world import OracleBackend, OracleConfig, World

ARM_BASELINE = "baseline"
ARM_MTG = "mtg-only"
ARM_MTI = "mti-only"
ARM_BOTH = "mtg-mti"

ARMS = (ARM_BASELINE, ARM_MTG, ARM_MTI, ARM_BOTH)


@dataclass(frozen=True)
class ArmResult:
    arm: str
    rank1: float
    rank5: float
    rank10: float
    map: float
    seconds: float


def pseudo_label_queries(
    world: World,
    oracle_cfg: OracleConfig,
    caption_cfg: CaptionConfig,
    pool: QuestionPool,
) -> dict[str, tuple[str, str]]:
    """(static, final) caption pair per identity, generated once and shared
    by every arm."""
    backend = OracleBackend(world, oracle_cfg)
    labels = generate_captions(world.truth.keys(), pool, caption_cfg, backend)
    return {
        label.image_id: (label.static_caption, label.final_caption)
        for label in labels
    }


def _plain_rankings(queries: dict[str, str], world: World):
    embed = world.schema.text_embedder()
    return [
        rank_all(embed(text), world.gallery, query_id=query_id)
        for query_id, text in sorted(queries.items())
    ]


def _refined_rankings(
    queries: dict[str, str],
    world: World,
    oracle_cfg: OracleConfig,
    search_cfg: SearchConfig,
):
    backend = OracleBackend(world, oracle_cfg)
    embed = world.schema.text_embedder()
    sessions = [
        search(text, world.gallery, search_cfg, backend, embed, query_id=query_id)
        for query_id, text in sorted(queries.items())
    ]
    return [session.final_ranking for session in sessions], sessions


def _score(rankings, relevant, seconds) -> dict:
    return {
        "rank1": rank_k_accuracy(rankings, relevant, 1),
        "rank5": rank_k_accuracy(rankings, relevant, 5),
        "rank10": rank_k_accuracy(rankings, relevant, 10),
        "map": mean_average_precision(rankings, relevant),
        "seconds": seconds,
    }


def run_ablation(
    world: World,
    oracle_cfg: OracleConfig | None = None,
    caption_cfg: CaptionConfig | None = None,
    search_cfg: SearchConfig | None = None,
    pool: QuestionPool | None = None,
) -> list[ArmResult]:
    oracle_cfg = oracle_cfg if oracle_cfg is not None else OracleConfig()
    caption_cfg = caption_cfg if caption_cfg is not None else CaptionConfig()
    search_cfg = search_cfg if search_cfg is not None else SearchConfig()
    pool = pool if pool is not None else default_question_pool()

    captions = pseudo_label_queries(world, oracle_cfg, caption_cfg, pool)
    static_queries = {qid: pair[0] for qid, pair in captions.items()}
    final_queries = {qid: pair[1] for qid, pair in captions.items()}
    relevant = world.relevance()

    results = []
    for arm in ARMS:
        start = time.perf_counter()
        if arm == ARM_BASELINE:
            rankings = _plain_rankings(static_queries, world)
        elif arm == ARM_MTG:
            rankings = _plain_rankings(final_queries, world)
        elif arm == ARM_MTI:
            rankings, _ = _refined_rankings(static_queries, world, oracle_cfg, search_cfg)
        else:
            rankings, _ = _refined_rankings(final_queries, world, oracle_cfg, search_cfg)
        elapsed = time.perf_counter() - start
        scores = _score(rankings, relevant, elapsed)
        results.append(ArmResult(arm=arm, **scores))
    return results


def save_ablation_csv(results: list[ArmResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["arm", "rank1", "rank5", "rank10", "map", "seconds"])
        for row in results:
            writer.writerow(
                [
                    row.arm,
                    f"{row.rank1:.4f}",
                    f"{row.rank5:.4f}",
                    f"{row.rank10:.4f}",
                    f"{row.map:.4f}",
                    f"{row.seconds:.3f}",
                ]
            )
