"""Pipeline configuration: defaults, config-file loading, flag overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the rollout pipeline; echoed verbatim into trace headers.

    Precedence: built-in defaults < config file < command-line flags.
    API credentials are read from the environment only (LONGMAB_API_KEY,
    and LONGMAB_API_BASE when ``api_base`` is unset), never from this file.
    """

    chunk_budget: int = 1500
    rollouts: int = 30
    top_k: int = 4
    alpha: float = 1.0
    epsilon: float = 1e-6
    reward_strategy: str = "full_response"
    mu_update_mode: str = "verbatim_global_t"
    init_rescale: str = "none"
    generator: str = "mock"
    api_base: str = ""
    model: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 512
    gen_seed: int | None = None
    timeout: float = 60.0
    max_retries: int = 3
    embedder: str = "hash"
    embed_api_base: str = ""
    embed_model: str = "hash"
    embed_dim: int = 256
    embed_batch_size: int = 16
    workers: int = 1
    generator_inflight: int = 4
    embedder_inflight: int = 4
    seed: int = 42
    extend_min_tokens: int = 8000
    extend_max_tokens: int = 16000
    mock_success_rule: str = "all_evidence_required"
    mock_threshold: float = 1.0
    mock_partial_credit: bool = False
    record_snapshots: bool = True
    subem_on: str = "response"
    qa_template: str = ""
    probe_template: str = ""

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(PipelineConfig)}


class ConfigError(Exception):
    pass


def load_config(path: str | None, overrides: dict | None = None) -> PipelineConfig:
    """Merge defaults, an optional JSON config file, and flag overrides."""
    values: dict = {}
    if path:
        with open(path, encoding="utf-8") as f:
            try:
                file_values = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path}: invalid JSON: {exc.msg}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {path}: top level must be an object")
        for key in file_values:
            if key not in _FIELD_TYPES:
                raise ConfigError(f"config file {path}: unknown key {key!r}")
        values.update(file_values)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    try:
        return PipelineConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
