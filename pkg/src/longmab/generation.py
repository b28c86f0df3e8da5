"""Response generators: an OpenAI-compatible chat client and a mock oracle.

Both backends implement ``generate(prompt, params, meta=None) -> str``. The
``meta`` mapping is a structured side-channel carrying the selected chunk
ids (and call kind) so the mock oracle never has to parse the prompt text;
the HTTP backend ignores it.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Callable, Mapping

import requests

logger = logging.getLogger(__name__)

BACKOFF_BASE = 0.5
BACKOFF_FACTOR = 2.0
BACKOFF_CAP = 30.0
BACKOFF_JITTER = 0.2


class TransportError(Exception):
    """A request that could not be completed; carries attempt bookkeeping."""

    def __init__(self, message: str, attempts: int, last_status: int | None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status


class GenerationError(TransportError):
    pass


class ProtocolError(Exception):
    """The server answered 200 but the body was not the expected shape."""


@dataclass(frozen=True)
class GenerationParams:
    model: str
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = None
    timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class InFlightLimiter:
    """Bounds the number of outstanding requests across concurrent callers."""

    def __init__(self, limit: int):
        if limit < 1:
            raise ValueError("limit must be >= 1")
        self.limit = limit
        self._sem = threading.BoundedSemaphore(limit)

    def __enter__(self) -> "InFlightLimiter":
        self._sem.acquire()
        return self

    def __exit__(self, *exc: object) -> None:
        self._sem.release()


def post_json_with_retry(
    url: str,
    payload: dict,
    *,
    headers: Mapping[str, str],
    timeout: float,
    max_retries: int,
    limiter: InFlightLimiter | None = None,
    error_cls: type[TransportError] = TransportError,
    backoff_base: float = BACKOFF_BASE,
    sleep: Callable[[float], None] = time.sleep,
) -> dict:
    """POST and return the JSON body, retrying transient failures.

    Retries cover timeouts, connection errors, 429 and 5xx responses, with
    exponential backoff (jittered, capped). Any other non-2xx status fails
    immediately. ``max_retries`` counts retries after the first attempt.
    """
    attempts = 0
    last_status: int | None = None
    delay = backoff_base
    while True:
        attempts += 1
        retryable = True
        failure = None
        try:
            with limiter if limiter is not None else nullcontext():
                resp = requests.post(url, json=payload, headers=dict(headers), timeout=timeout)
            last_status = resp.status_code
            if 200 <= resp.status_code < 300:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"response body is not JSON: {exc}") from exc
            retryable = resp.status_code == 429 or resp.status_code >= 500
            failure = f"HTTP {resp.status_code}"
        except requests.RequestException as exc:
            failure = f"transport failure: {exc}"
        if not retryable:
            raise error_cls(f"{failure} (not retryable)", attempts, last_status)
        if attempts > max_retries:
            raise error_cls(
                f"retries exhausted after {attempts} attempts: {failure}",
                attempts,
                last_status,
            )
        sleep(delay * random.uniform(1 - BACKOFF_JITTER, 1 + BACKOFF_JITTER))
        delay = min(delay * BACKOFF_FACTOR, BACKOFF_CAP)


class HttpChatGenerator:
    """OpenAI-compatible ``/v1/chat/completions`` client."""

    name = "openai-chat"

    def __init__(
        self,
        base_url: str,
        api_key: str,
        limiter: InFlightLimiter | None = None,
        backoff_base: float = BACKOFF_BASE,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.limiter = limiter
        self.backoff_base = backoff_base
        self.sleep = sleep

    def generate(
        self, prompt: str, params: GenerationParams, meta: Mapping | None = None
    ) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        payload: dict = {
            "model": params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        body = post_json_with_retry(
            f"{self.base_url}/v1/chat/completions",
            payload,
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=params.timeout,
            max_retries=params.max_retries,
            limiter=self.limiter,
            error_cls=GenerationError,
            backoff_base=self.backoff_base,
            sleep=self.sleep,
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat completion body: {exc!r}") from exc
        if not isinstance(content, str):
            raise ProtocolError("message content is not a string")
        return content


RULE_ALL_EVIDENCE = "all_evidence_required"
RULE_ANY_EVIDENCE = "any_evidence"
RULE_FRACTION = "fraction_threshold"


@dataclass(frozen=True)
class MockOracleSpec:
    """Deterministic stand-in for the LLM, keyed on selected chunk ids.

    The oracle answers correctly iff the selected ids satisfy
    ``success_rule`` against ``evidence_chunk_ids``. With ``partial_credit``
    a partially-covered evidence set yields a truncated answer instead of
    "unknown", producing intermediate rewards.
    """

    evidence_chunk_ids: frozenset[int]
    gold_answer: str
    success_rule: str = RULE_ALL_EVIDENCE
    threshold: float = 1.0
    partial_credit: bool = False

    def __post_init__(self) -> None:
        if self.success_rule not in (RULE_ALL_EVIDENCE, RULE_ANY_EVIDENCE, RULE_FRACTION):
            raise ValueError(f"unknown success rule: {self.success_rule!r}")


class MockOracle:
    """Pure function of (selected chunk ids, spec); byte-identical on repeat."""

    name = "mock-oracle"

    def __init__(self, spec: MockOracleSpec):
        self.spec = spec

    def _evidence_fraction(self, selected: set[int]) -> float:
        ev = self.spec.evidence_chunk_ids
        if not ev:
            return 1.0
        return len(ev & selected) / len(ev)

    def _succeeds(self, selected: set[int]) -> bool:
        ev = self.spec.evidence_chunk_ids
        if not ev:
            return True
        if self.spec.success_rule == RULE_ALL_EVIDENCE:
            return ev <= selected
        if self.spec.success_rule == RULE_ANY_EVIDENCE:
            return bool(ev & selected)
        return self._evidence_fraction(selected) >= self.spec.threshold

    def generate(
        self, prompt: str, params: GenerationParams, meta: Mapping | None = None
    ) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if meta is not None and meta.get("kind") == "probe":
            if not self.spec.evidence_chunk_ids:
                return ""
            return (
                f"The context supports the answer {self.spec.gold_answer}. "
                f"Evidence: the passages state that the answer is {self.spec.gold_answer}."
            )
        if meta is None or "selected_chunk_ids" not in meta:
            raise ValueError("mock oracle requires selected_chunk_ids in meta")
        selected = set(meta["selected_chunk_ids"])
        considered = ",".join(str(i) for i in sorted(selected))
        if self._succeeds(selected):
            answer = self.spec.gold_answer
        elif self.spec.partial_credit and self._evidence_fraction(selected) > 0:
            words = self.spec.gold_answer.split()
            answer = "possibly " + " ".join(words[: max(1, len(words) // 2)])
        else:
            answer = "unknown"
        return f"Reasoning: considered chunks {considered}.\nAnswer: {answer}"
