"""Per-question rollout loop: score, select, generate, reward, update, record."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import IO, Iterator

from . import bandit
from .bandit import MU_UPDATE_GLOBAL_T
from .chunking import Chunk, PromptTemplate, assemble_prompt
from .corpus import QAInstance, full_context
from .generation import GenerationParams, ProtocolError, TransportError
from .metrics import RewardStrategy, extract_answer, response_reward

logger = logging.getLogger(__name__)

FLAG_GENERATION_ERROR = "generation_error"


@dataclass(frozen=True)
class RolloutConfig:
    rollouts: int = 30
    top_k: int = 4
    alpha: float = 1.0
    epsilon: float = 1e-6
    reward_strategy: RewardStrategy = RewardStrategy.FULL_RESPONSE
    mu_update_mode: str = MU_UPDATE_GLOBAL_T
    record_snapshots: bool = True

    def __post_init__(self) -> None:
        if self.rollouts < 2:
            raise ValueError("rollouts must be >= 2 (a pair needs two candidates)")


@dataclass(frozen=True)
class RolloutRecord:
    question_id: str
    step: int
    selected_chunk_ids: list[int]
    response: str
    answer: str
    reward: float
    flags: list[str] = field(default_factory=list)
    mu_snapshot: list[float] | None = None
    n_snapshot: list[int] | None = None


@dataclass(frozen=True)
class RolloutTrace:
    """All rollout steps for one question, plus enough context to rebuild pairs.

    The header payload carries the question, gold answers and the full
    concatenated context so downstream commands can run from the trace file
    alone.
    """

    question_id: str
    config: dict
    records: list[RolloutRecord]
    gt_chunk_ids: set[int]
    question: str = ""
    context: str = ""
    gold_answers: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def run_rollouts(
    inst: QAInstance,
    chunks: list[Chunk],
    init_mu: list[float],
    gen,
    cfg: RolloutConfig,
    params: GenerationParams,
    template: PromptTemplate,
    gt_chunk_ids: set[int] | None = None,
    config_echo: dict | None = None,
    flags: list[str] | None = None,
) -> RolloutTrace:
    """Run the full T-step bandit loop for one question.

    A failed generation at some step is recorded with reward 0 and an error
    flag, and the loop continues; the bandit still advances so the step
    accounting stays consistent.
    """
    if not chunks:
        raise ValueError("chunks must be non-empty")
    if len(init_mu) != len(chunks):
        raise ValueError("init_mu length must match chunk count")
    state = bandit.init_state(
        init_mu, cfg.alpha, cfg.epsilon, cfg.top_k, mu_update_mode=cfg.mu_update_mode
    )
    records: list[RolloutRecord] = []
    for step in range(1, cfg.rollouts + 1):
        scores = bandit.ucb_scores(state)
        selected = bandit.select_top_k(scores, cfg.top_k)
        prompt = assemble_prompt([chunks[i] for i in selected], inst.question, template)
        step_flags: list[str] = []
        try:
            response = gen.generate(
                prompt,
                params,
                meta={
                    "kind": "rollout",
                    "question_id": inst.id,
                    "step": step,
                    "selected_chunk_ids": list(selected),
                },
            )
            answer = extract_answer(response)
            reward = response_reward(response, inst.gold_answers, cfg.reward_strategy)
        except (TransportError, ProtocolError) as exc:
            logger.warning("question %s step %d: generation failed: %s", inst.id, step, exc)
            response, answer, reward = "", "", 0.0
            step_flags.append(FLAG_GENERATION_ERROR)
        state = bandit.update(state, selected, reward)
        records.append(
            RolloutRecord(
                question_id=inst.id,
                step=step,
                selected_chunk_ids=list(selected),
                response=response,
                answer=answer,
                reward=reward,
                flags=step_flags,
                mu_snapshot=[arm.mu for arm in state.arms] if cfg.record_snapshots else None,
                n_snapshot=[arm.n for arm in state.arms] if cfg.record_snapshots else None,
            )
        )
    echo = config_echo if config_echo is not None else _config_dict(cfg, params)
    return RolloutTrace(
        question_id=inst.id,
        config=echo,
        records=records,
        gt_chunk_ids=set(gt_chunk_ids or ()),
        question=inst.question,
        context=full_context(inst),
        gold_answers=list(inst.gold_answers),
        flags=list(flags or ()),
    )


def _config_dict(cfg: RolloutConfig, params: GenerationParams) -> dict:
    return {
        "rollouts": cfg.rollouts,
        "top_k": cfg.top_k,
        "alpha": cfg.alpha,
        "epsilon": cfg.epsilon,
        "reward_strategy": cfg.reward_strategy.value,
        "mu_update_mode": cfg.mu_update_mode,
        "model": params.model,
        "temperature": params.temperature,
        "seed": params.seed,
    }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_trace(trace: RolloutTrace, out: IO[str]) -> None:
    """Append one header line and one line per rollout step."""
    header = {
        "question_id": trace.question_id,
        "config": trace.config,
        "gt_chunk_ids": sorted(trace.gt_chunk_ids),
        "question": trace.question,
        "context": trace.context,
        "gold_answers": trace.gold_answers,
        "flags": trace.flags,
    }
    out.write(_dumps(header) + "\n")
    for r in trace.records:
        row: dict = {
            "question_id": r.question_id,
            "step": r.step,
            "selected_chunk_ids": r.selected_chunk_ids,
            "response": r.response,
            "answer": r.answer,
            "reward": r.reward,
            "flags": r.flags,
        }
        if r.mu_snapshot is not None:
            row["mu"] = r.mu_snapshot
        if r.n_snapshot is not None:
            row["n"] = r.n_snapshot
        out.write(_dumps(row) + "\n")


def read_traces(path: str) -> Iterator[RolloutTrace]:
    """Parse a trace file back into RolloutTrace objects, header-delimited."""
    current: RolloutTrace | None = None
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "config" in obj:
                if current is not None:
                    yield current
                current = RolloutTrace(
                    question_id=obj["question_id"],
                    config=obj["config"],
                    records=[],
                    gt_chunk_ids=set(obj.get("gt_chunk_ids", [])),
                    question=obj.get("question", ""),
                    context=obj.get("context", ""),
                    gold_answers=list(obj.get("gold_answers", [])),
                    flags=list(obj.get("flags", [])),
                )
            elif "step" in obj:
                if current is None:
                    raise ValueError(f"line {line_no}: step record before any header")
                current.records.append(
                    RolloutRecord(
                        question_id=obj["question_id"],
                        step=obj["step"],
                        selected_chunk_ids=list(obj["selected_chunk_ids"]),
                        response=obj["response"],
                        answer=obj["answer"],
                        reward=obj["reward"],
                        flags=list(obj.get("flags", [])),
                        mu_snapshot=obj.get("mu"),
                        n_snapshot=obj.get("n"),
                    )
                )
            else:
                raise ValueError(f"line {line_no}: unrecognized trace line")
    if current is not None:
        yield current
