"""QA dataset loading, context extension with distractors, gold-chunk lookup."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Iterator

from .chunking import Chunk, TokenizerSpec, DEFAULT_TOKENIZER, count_tokens
from .metrics import normalize_text

logger = logging.getLogger(__name__)

QA_SCHEMA = "qa-jsonl-v1"


@dataclass(frozen=True)
class Passage:
    title: str
    text: str
    is_distractor: bool = False


@dataclass(frozen=True)
class QAInstance:
    """One long-context QA item: question, gold answers, ordered passages."""

    id: str
    question: str
    gold_answers: list[str]
    passages: list[Passage]
    meta: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class LoadError:
    line_no: int
    message: str


def render_passage(p: Passage) -> str:
    return f"{p.title}\n{p.text}" if p.title else p.text


def full_context(inst: QAInstance) -> str:
    """The concatenated context all chunking operates on."""
    return "\n\n".join(render_passage(p) for p in inst.passages)


def _parse_record(obj: object) -> QAInstance:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    for key in ("id", "question", "answers", "passages"):
        if key not in obj:
            raise ValueError(f"record missing {key!r}")
    answers = obj["answers"]
    if not isinstance(answers, list) or not answers:
        raise ValueError("empty answers")
    passages = []
    for p in obj["passages"]:
        text = p.get("text", "")
        if not text:
            raise ValueError("passage with empty text")
        passages.append(Passage(title=p.get("title", ""), text=text))
    return QAInstance(
        id=str(obj["id"]),
        question=str(obj["question"]),
        gold_answers=[str(a) for a in answers],
        passages=passages,
    )


def load_dataset(
    path: str,
    schema: str = QA_SCHEMA,
    errors: list[LoadError] | None = None,
) -> Iterator[QAInstance]:
    """Yield instances from a line-delimited QA file in file order.

    Malformed lines are reported (with their 1-based line number) to the
    ``errors`` collector, or logged as warnings when none is given; the
    stream continues past them.
    """
    if schema != QA_SCHEMA:
        raise ValueError(f"unknown input schema: {schema!r}")
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                inst = _parse_record(obj)
                if inst.id in seen_ids:
                    raise ValueError(f"duplicate id {inst.id!r}")
                seen_ids.add(inst.id)
            except json.JSONDecodeError as exc:
                err = LoadError(line_no, f"invalid JSON: {exc.msg}")
                if errors is not None:
                    errors.append(err)
                else:
                    logger.warning("line %d: %s", line_no, err.message)
                continue
            except (ValueError, TypeError, AttributeError) as exc:
                err = LoadError(line_no, str(exc))
                if errors is not None:
                    errors.append(err)
                else:
                    logger.warning("line %d: %s", line_no, err.message)
                continue
            yield inst


def load_passage_pool(path: str) -> list[Passage]:
    """Load a distractor pool file (same passage object shape, one per line)."""
    pool = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            p = json.loads(line)
            pool.append(Passage(title=p.get("title", ""), text=p["text"]))
    return pool


POOL_EXHAUSTED_FLAG = "pool_exhausted"


def extend_context(
    inst: QAInstance,
    pool: list[Passage],
    min_tokens: int,
    max_tokens: int,
    seed: int,
    spec: TokenizerSpec = DEFAULT_TOKENIZER,
) -> QAInstance:
    """Pad the instance with distractor passages until it reaches ``min_tokens``.

    Distractors are drawn without replacement in a seeded random order and
    inserted at seeded random positions among the existing passages;
    original passages keep their relative order. The walk stops at the
    first prefix of drawn distractors whose total reaches ``min_tokens``,
    which may overshoot ``max_tokens`` only when no smaller prefix suffices.
    An exhausted pool sets a warning flag in ``meta`` instead of failing.
    """
    if min_tokens > max_tokens:
        raise ValueError("min_tokens must be <= max_tokens")
    original_texts = {p.text for p in inst.passages}
    if any(p.text in original_texts for p in pool):
        raise ValueError("pool passages must be disjoint from instance passages")

    total = sum(count_tokens(render_passage(p), spec) for p in inst.passages)
    if total >= min_tokens:
        return inst

    rng = random.Random(seed)
    order = rng.sample(range(len(pool)), len(pool))
    passages = list(inst.passages)
    for pool_idx in order:
        if total >= min_tokens:
            break
        d = pool[pool_idx]
        distractor = Passage(title=d.title, text=d.text, is_distractor=True)
        passages.insert(rng.randint(0, len(passages)), distractor)
        total += count_tokens(render_passage(distractor), spec)

    meta = dict(inst.meta)
    if total < min_tokens:
        meta["context_extension"] = POOL_EXHAUSTED_FLAG
    return replace(inst, passages=passages, meta=meta)


def ground_truth_chunk_ids(chunks: list[Chunk], golds: list[str]) -> set[int]:
    """Indices of chunks whose normalized text contains a normalized gold answer."""
    if not chunks:
        raise ValueError("chunks must be non-empty")
    norm_golds = [normalize_text(g) for g in golds]
    out = set()
    for chunk in chunks:
        norm_chunk = normalize_text(chunk.text)
        if any(g in norm_chunk for g in norm_golds):
            out.add(chunk.index)
    return out
