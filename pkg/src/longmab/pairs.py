"""Preference-pair construction from rollout traces, plus the DPO loss term."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Iterable, Iterator

from .corpus import QAInstance, full_context
from .rollout import RolloutTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreferencePair:
    """(context, question, chosen, rejected) with both rewards, DPO-ready."""

    id: str
    context: str
    question: str
    chosen: str
    rejected: str
    reward_chosen: float
    reward_rejected: float
    chosen_step: int
    rejected_step: int


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.1
    learning_rate: float = 2e-5
    epochs: int = 2
    adapter: str = "lora"

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


def build_pair(trace: RolloutTrace, inst: QAInstance | None = None) -> PreferencePair | None:
    """Best-vs-worst pair from one trace, or None when no strict margin exists.

    Flagged records (failed generations) are excluded entirely. Ties break
    toward the earlier step. The pair's context is the full original
    context, not the chunk subset that produced either response.
    """
    usable = [r for r in trace.records if not r.flags]
    if len(usable) < 2:
        logger.info("question %s: skipped, %d unflagged records", trace.question_id, len(usable))
        return None
    chosen = min(usable, key=lambda r: (-r.reward, r.step))
    rejected = min(usable, key=lambda r: (r.reward, r.step))
    if chosen.reward == rejected.reward:
        logger.info("question %s: skipped, no strict reward margin", trace.question_id)
        return None
    if chosen.response == rejected.response:
        logger.info("question %s: skipped, identical chosen/rejected texts", trace.question_id)
        return None
    if inst is not None:
        context, question = full_context(inst), inst.question
    else:
        context, question = trace.context, trace.question
    return PreferencePair(
        id=trace.question_id,
        context=context,
        question=question,
        chosen=chosen.response,
        rejected=rejected.response,
        reward_chosen=chosen.reward,
        reward_rejected=rejected.reward,
        chosen_step=chosen.step,
        rejected_step=rejected.step,
    )


def emit_pairs(pairs: Iterable[PreferencePair], path: str) -> int:
    """Write pairs as line-delimited records; atomic rename on completion.

    On failure the partial temporary file is removed and no destination
    file is left behind.
    """
    tmp_path = path + ".tmp"
    count = 0
    try:
        with open(tmp_path, "w", encoding="utf-8") as f:
            for p in pairs:
                row = {
                    "id": p.id,
                    "context": p.context,
                    "question": p.question,
                    "chosen": p.chosen,
                    "rejected": p.rejected,
                    "reward_chosen": p.reward_chosen,
                    "reward_rejected": p.reward_rejected,
                    "chosen_step": p.chosen_step,
                    "rejected_step": p.rejected_step,
                }
                f.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
                count += 1
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    os.replace(tmp_path, path)
    return count


def read_pairs(path: str) -> Iterator[PreferencePair]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            yield PreferencePair(
                id=obj["id"],
                context=obj["context"],
                question=obj["question"],
                chosen=obj["chosen"],
                rejected=obj["rejected"],
                reward_chosen=obj["reward_chosen"],
                reward_rejected=obj["reward_rejected"],
                chosen_step=obj["chosen_step"],
                rejected_step=obj["rejected_step"],
            )


def _softplus(z: float) -> float:
    # max(z, 0) + log1p(exp(-|z|)) stays finite for |z| in the hundreds.
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def dpo_loss_term(
    logp_pol_chosen: float,
    logp_ref_chosen: float,
    logp_pol_rejected: float,
    logp_ref_rejected: float,
    beta: float,
) -> float:
    """-log sigmoid(beta * (chosen log-ratio - rejected log-ratio)).

    Pure diagnostic; depends on the four log-probabilities only through the
    margin between the two ratios.
    """
    values = (logp_pol_chosen, logp_ref_chosen, logp_pol_rejected, logp_ref_rejected, beta)
    if any(not math.isfinite(v) for v in values):
        raise ValueError("all inputs must be finite")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    margin = (logp_pol_chosen - logp_ref_chosen) - (logp_pol_rejected - logp_ref_rejected)
    return _softplus(-beta * margin)
