"""Answer scoring: normalization, substring exact match, token F1, rewards."""

from __future__ import annotations

import re
import string
from collections import Counter
from enum import Enum

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ANSWER_MARKER_RE = re.compile(r"answer:", re.IGNORECASE)


class RewardStrategy(str, Enum):
    """How the scalar reward composes SubEM and F1 over a response."""

    FULL_RESPONSE = "full_response"
    ANSWER_BASED = "answer_based"


def normalize_text(s: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    s = s.lower()
    s = s.translate(_PUNCT_TABLE)
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def sub_em(pred: str, golds: list[str]) -> int:
    """1 iff some normalized gold answer is a substring of the normalized prediction."""
    if not golds:
        raise ValueError("golds must be non-empty")
    norm_pred = normalize_text(pred)
    return int(any(normalize_text(g) in norm_pred for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds: list[str]) -> float:
    """Bag-of-tokens F1 over normalized text, maximized over the gold answers.

    Overlap is counted as a token multiset intersection. Both sides empty
    after normalization scores 1.0; exactly one side empty scores 0.0.
    """
    if not golds:
        raise ValueError("golds must be non-empty")
    pred_tokens = normalize_text(pred).split()
    return max(_f1_single(pred_tokens, normalize_text(g).split()) for g in golds)


def extract_answer(response: str) -> str:
    """Return the text after the last "Answer:" marker (case-insensitive).

    Trailing periods and surrounding whitespace are trimmed. A response
    without the marker is returned whole.
    """
    last = None
    for m in _ANSWER_MARKER_RE.finditer(response):
        last = m
    if last is None:
        return response.strip().rstrip(".").strip()
    return response[last.end():].strip().rstrip(".").strip()


def response_reward(response: str, golds: list[str], strategy: RewardStrategy) -> float:
    """Scalar reward in [0, 1]: mean of a SubEM term and an answer F1 term.

    FULL_RESPONSE checks SubEM against the whole response; ANSWER_BASED
    checks it against the extracted answer only. F1 always scores the
    extracted answer.
    """
    answer = extract_answer(response)
    if strategy is RewardStrategy.FULL_RESPONSE:
        em = sub_em(response, golds)
    else:
        em = sub_em(answer, golds)
    return (em + token_f1(answer, golds)) / 2
