"""Rollout diagnostics: gold-chunk recall trends, reward trends, diversity."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

from .metrics import sub_em
from .probing import Embedder, cosine
from .rollout import RolloutRecord, RolloutTrace

SUBEM_ON_RESPONSE = "response"
SUBEM_ON_ANSWER = "answer"


@dataclass(frozen=True)
class TrendReport:
    """Per-step means across questions; all lists share the rollout count T."""

    per_step_recall: list[float]
    per_step_subem: list[float]
    per_step_reward: list[float]
    question_count: int


@dataclass(frozen=True)
class DiversityReport:
    mean_pairwise_similarity: float
    variance_pairwise_similarity: float
    pair_count: int


def gt_recall_at_step(record: RolloutRecord, gt_ids: set[int]) -> float | None:
    """Fraction of ground-truth chunks covered by this step's selection.

    Undefined (None) when the question has no ground-truth chunks; such
    questions are excluded from recall averages rather than scored zero.
    """
    if not gt_ids:
        return None
    return len(set(record.selected_chunk_ids) & gt_ids) / len(gt_ids)


def quality_trend(
    traces: Sequence[RolloutTrace],
    golds_by_id: Mapping[str, list[str]],
    subem_on: str = SUBEM_ON_RESPONSE,
) -> TrendReport:
    """Mean recall / SubEM / reward per rollout step over a trace corpus."""
    if not traces:
        raise ValueError("traces must be non-empty")
    if subem_on not in (SUBEM_ON_RESPONSE, SUBEM_ON_ANSWER):
        raise ValueError(f"unknown subem_on: {subem_on!r}")
    steps = len(traces[0].records)
    for trace in traces:
        if len(trace.records) != steps:
            raise ValueError(
                f"mismatched rollout counts: {len(trace.records)} vs {steps} "
                f"(question {trace.question_id})"
            )
    per_step_recall = []
    per_step_subem = []
    per_step_reward = []
    for s in range(steps):
        recalls = []
        subems = []
        rewards = []
        for trace in traces:
            record = trace.records[s]
            recall = gt_recall_at_step(record, trace.gt_chunk_ids)
            if recall is not None:
                recalls.append(recall)
            golds = golds_by_id[trace.question_id]
            target = record.response if subem_on == SUBEM_ON_RESPONSE else record.answer
            subems.append(sub_em(target, golds))
            rewards.append(record.reward)
        per_step_recall.append(sum(recalls) / len(recalls) if recalls else 0.0)
        per_step_subem.append(sum(subems) / len(subems))
        per_step_reward.append(sum(rewards) / len(rewards))
    return TrendReport(
        per_step_recall=per_step_recall,
        per_step_subem=per_step_subem,
        per_step_reward=per_step_reward,
        question_count=len(traces),
    )


def diversity_stats(responses: Sequence[str], embedder: Embedder) -> DiversityReport:
    """Population mean and variance of pairwise cosine over all response pairs."""
    if len(responses) < 2:
        raise ValueError("need at least 2 responses")
    vectors = embedder.embed(responses)
    sims = [cosine(u, v) for u, v in combinations(vectors, 2)]
    mean = sum(sims) / len(sims)
    variance = sum((s - mean) ** 2 for s in sims) / len(sims)
    return DiversityReport(
        mean_pairwise_similarity=mean,
        variance_pairwise_similarity=variance,
        pair_count=len(sims),
    )
