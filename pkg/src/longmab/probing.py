"""Probe-based bandit initialization: evidence trace, embeddings, cosine priors."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .chunking import Chunk, PromptTemplate
from .corpus import QAInstance, full_context
from .generation import (
    GenerationParams,
    InFlightLimiter,
    ProtocolError,
    TransportError,
    post_json_with_retry,
)

logger = logging.getLogger(__name__)


class ProbeUnavailableError(Exception):
    """Raised when no usable probe trace could be produced."""


class EmbeddingError(TransportError):
    pass


@dataclass(frozen=True)
class ProbeTrace:
    question_id: str
    text: str
    created_with: str


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def generate_probe(
    inst: QAInstance,
    gen,
    template: PromptTemplate,
    params: GenerationParams,
) -> ProbeTrace:
    """Ask the generator for an evidence trace, given question, context and golds."""
    prompt = template.render(
        context=full_context(inst),
        question=inst.question,
        answers="; ".join(inst.gold_answers),
    )
    try:
        text = gen.generate(prompt, params, meta={"kind": "probe", "question_id": inst.id})
    except (TransportError, ProtocolError) as exc:
        raise ProbeUnavailableError(f"probe generation failed: {exc}") from exc
    if not text.strip():
        raise ProbeUnavailableError("probe generation returned empty text")
    name = getattr(gen, "name", type(gen).__name__)
    return ProbeTrace(question_id=inst.id, text=text, created_with=name)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    norm_u = float(np.linalg.norm(u))
    norm_v = float(np.linalg.norm(v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("cosine undefined for zero-norm vectors")
    return float(np.dot(u, v)) / (norm_u * norm_v)


def init_rewards(chunks: list[Chunk], probe: ProbeTrace, embedder: Embedder) -> list[float]:
    """Initial expected reward per chunk: cosine(probe embedding, chunk embedding)."""
    if not chunks:
        raise ValueError("chunks must be non-empty")
    probe_vec = embedder.embed([probe.text])[0]
    chunk_vecs = embedder.embed([c.text for c in chunks])
    return [cosine(probe_vec, vec) for vec in chunk_vecs]


def rescale_minmax(values: list[float]) -> list[float]:
    """Map values affinely onto [0, 1]; a constant vector maps to all zeros."""
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0 for _ in values]
    return [(v - lo) / (hi - lo) for v in values]


class HashingEmbedder:
    """Deterministic offline embedder using signed feature hashing.

    Word unigrams and bigrams are hashed into a fixed-dimension signed
    count vector and normalized, so texts sharing phrases land near each
    other. Useful as a mock backend and for network-free analysis.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed

    def _features(self, text: str):
        words = text.lower().split()
        yield from words
        for a, b in zip(words, words[1:]):
            yield f"{a} {b}"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        salt = str(self.seed).encode()
        for text in texts:
            vec = np.zeros(self.dim, dtype=np.float64)
            for feat in self._features(text):
                h = int.from_bytes(
                    hashlib.blake2b(feat.encode(), digest_size=8, salt=salt[:16]).digest(),
                    "big",
                )
                sign = 1.0 if h & 1 else -1.0
                vec[(h >> 1) % self.dim] += sign
            if not vec.any():
                vec[0] = 1.0
            out.append(vec / np.linalg.norm(vec))
        return out


class HttpEmbedder:
    """OpenAI-compatible ``/v1/embeddings`` client with batching and retry."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        batch_size: int = 16,
        timeout: float = 60.0,
        max_retries: int = 3,
        limiter: InFlightLimiter | None = None,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.batch_size = batch_size
        self.timeout = timeout
        self.max_retries = max_retries
        self.limiter = limiter
        self.backoff_base = backoff_base
        self.sleep = sleep

    def _embed_batch(self, batch: Sequence[str]) -> list[np.ndarray]:
        body = post_json_with_retry(
            f"{self.base_url}/v1/embeddings",
            {"model": self.model, "input": list(batch)},
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=self.timeout,
            max_retries=self.max_retries,
            limiter=self.limiter,
            error_cls=EmbeddingError,
            backoff_base=self.backoff_base,
            sleep=self.sleep,
        )
        try:
            rows = sorted(body["data"], key=lambda r: r["index"])
            vectors = [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed embeddings body: {exc!r}") from exc
        if len(vectors) != len(batch):
            raise ProtocolError(
                f"expected {len(batch)} embeddings, got {len(vectors)}"
            )
        for vec in vectors:
            if vec.ndim != 1 or not np.all(np.isfinite(vec)):
                raise ProtocolError("embedding vector is not a finite 1-d array")
        return vectors

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            out.extend(self._embed_batch(texts[start : start + self.batch_size]))
        return out
