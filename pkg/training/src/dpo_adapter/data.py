"""Pairs-file loading, tokenization, and prompt construction."""

from __future__ import annotations

import json
from dataclasses import dataclass

PAIR_KEYS = (
    "id", "context", "question", "chosen", "rejected",
    "reward_chosen", "reward_rejected", "chosen_step", "rejected_step",
)

PROMPT_HEAD = "Read the following context and answer the question.\n\n"
PROMPT_TAIL = "\n\nQuestion: {question}\nAnswer:"


class PairSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class PairExample:
    id: str
    context: str
    question: str
    prompt: str
    chosen: str
    rejected: str


def build_prompt(context: str, question: str) -> str:
    return PROMPT_HEAD + context + PROMPT_TAIL.format(question=question)


def load_pairs(path: str) -> list[PairExample]:
    """Parse a longmab pairs file into (prompt, chosen, rejected) examples.

    Any schema violation is a hard error naming the offending line; the
    returned count always equals the number of non-empty lines.
    """
    examples = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PairSchemaError(f"line {line_no}: invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise PairSchemaError(f"line {line_no}: record is not an object")
            for key in PAIR_KEYS:
                if key not in obj:
                    raise PairSchemaError(f"line {line_no}: missing key {key!r}")
            for key in ("context", "question", "chosen", "rejected"):
                if not isinstance(obj[key], str):
                    raise PairSchemaError(f"line {line_no}: {key!r} must be a string")
            examples.append(
                PairExample(
                    id=str(obj["id"]),
                    context=obj["context"],
                    question=obj["question"],
                    prompt=build_prompt(obj["context"], obj["question"]),
                    chosen=obj["chosen"],
                    rejected=obj["rejected"],
                )
            )
    return examples


class ByteTokenizer:
    """UTF-8 byte tokenizer for locally constructed smoke models.

    Ids 0..255 are raw bytes; 256 pads, 257 ends a sequence.
    """

    pad_id = 256
    eos_id = 257
    vocab_size = 258

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: list[int]) -> str:
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


def truncate_prompt_ids(
    tokenizer,
    context: str,
    question: str,
    max_prompt_tokens: int,
) -> list[int]:
    """Tokenize the prompt, left-truncating the context, keeping the question.

    The head/tail of the prompt template and the question are always kept
    whole; only the leading part of the context is dropped when the budget
    is exceeded.
    """
    head_ids = tokenizer.encode(PROMPT_HEAD)
    tail_ids = tokenizer.encode(PROMPT_TAIL.format(question=question))
    budget = max_prompt_tokens - len(head_ids) - len(tail_ids)
    if budget <= 0:
        return head_ids + tail_ids
    ctx_ids = tokenizer.encode(context)
    if len(ctx_ids) > budget:
        ctx_ids = ctx_ids[-budget:]
    return head_ids + ctx_ids + tail_ids
