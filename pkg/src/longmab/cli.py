"""Command-line surface: rollout, pairs, analyze, eval, chunk."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import analysis as analysis_mod
from . import pairs as pairs_mod
from .chunking import (
    PromptTemplate,
    default_probe_template,
    default_qa_template,
    load_template,
    split_chunks,
)
from .config import ConfigError, PipelineConfig, load_config
from .corpus import (
    LoadError,
    Passage,
    QAInstance,
    extend_context,
    full_context,
    ground_truth_chunk_ids,
    load_dataset,
    load_passage_pool,
)
from .generation import (
    GenerationParams,
    HttpChatGenerator,
    InFlightLimiter,
    MockOracle,
    MockOracleSpec,
    ProtocolError,
)
from .metrics import RewardStrategy, extract_answer, response_reward, sub_em, token_f1
from .probing import (
    EmbeddingError,
    HashingEmbedder,
    HttpEmbedder,
    ProbeUnavailableError,
    generate_probe,
    init_rewards,
    rescale_minmax,
)
from .rollout import RolloutConfig, read_traces, run_rollouts, write_trace

logger = logging.getLogger(__name__)

ENV_API_KEY = "LONGMAB_API_KEY"
ENV_API_BASE = "LONGMAB_API_BASE"

FLAG_PROBE_FALLBACK = "probe_fallback"


def _question_seed(seed: int, question_id: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{question_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % (2**31)


def _gen_params(cfg: PipelineConfig) -> GenerationParams:
    return GenerationParams(
        model=cfg.model,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        seed=cfg.gen_seed,
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
    )


def _qa_template(cfg: PipelineConfig) -> PromptTemplate:
    return load_template(cfg.qa_template) if cfg.qa_template else default_qa_template()


def _probe_template(cfg: PipelineConfig) -> PromptTemplate:
    return load_template(cfg.probe_template) if cfg.probe_template else default_probe_template()


def _build_embedder(cfg: PipelineConfig):
    if cfg.embedder == "hash":
        return HashingEmbedder(dim=cfg.embed_dim, seed=cfg.seed)
    if cfg.embedder == "http":
        base = cfg.embed_api_base or cfg.api_base or os.environ.get(ENV_API_BASE, "")
        key = os.environ.get(ENV_API_KEY, "")
        if not base:
            raise ConfigError("http embedder requires embed_api_base or LONGMAB_API_BASE")
        if not key:
            raise ConfigError(f"http embedder requires {ENV_API_KEY}")
        return HttpEmbedder(
            base_url=base,
            api_key=key,
            model=cfg.embed_model,
            batch_size=cfg.embed_batch_size,
            timeout=cfg.timeout,
            max_retries=cfg.max_retries,
            limiter=InFlightLimiter(cfg.embedder_inflight),
        )
    raise ConfigError(f"unknown embedder kind: {cfg.embedder!r}")


def _build_chat_client(cfg: PipelineConfig) -> HttpChatGenerator | None:
    if cfg.generator == "mock":
        return None
    if cfg.generator != "http":
        raise ConfigError(f"unknown generator kind: {cfg.generator!r}")
    base = cfg.api_base or os.environ.get(ENV_API_BASE, "")
    key = os.environ.get(ENV_API_KEY, "")
    if not base:
        raise ConfigError(f"http generator requires api_base or {ENV_API_BASE}")
    if not key:
        raise ConfigError(f"http generator requires {ENV_API_KEY}")
    return HttpChatGenerator(
        base_url=base, api_key=key, limiter=InFlightLimiter(cfg.generator_inflight)
    )


def _run_question(
    inst: QAInstance,
    cfg: PipelineConfig,
    pool: list[Passage] | None,
    chat_client: HttpChatGenerator | None,
    embedder,
    qa_tmpl: PromptTemplate,
    probe_tmpl: PromptTemplate,
    params: GenerationParams,
):
    if pool is not None:
        inst = extend_context(
            inst,
            pool,
            cfg.extend_min_tokens,
            cfg.extend_max_tokens,
            _question_seed(cfg.seed, inst.id),
        )
    chunks = split_chunks(full_context(inst), cfg.chunk_budget)
    gt_ids = ground_truth_chunk_ids(chunks, inst.gold_answers)
    if chat_client is not None:
        gen = chat_client
    else:
        gen = MockOracle(
            MockOracleSpec(
                evidence_chunk_ids=frozenset(gt_ids),
                gold_answer=inst.gold_answers[0],
                success_rule=cfg.mock_success_rule,
                threshold=cfg.mock_threshold,
                partial_credit=cfg.mock_partial_credit,
            )
        )
    flags: list[str] = []
    try:
        probe = generate_probe(inst, gen, probe_tmpl, params)
        init_mu = init_rewards(chunks, probe, embedder)
        if cfg.init_rescale == "minmax":
            init_mu = rescale_minmax(init_mu)
    except (ProbeUnavailableError, EmbeddingError, ProtocolError) as exc:
        logger.warning("question %s: probe init failed (%s); cold start", inst.id, exc)
        init_mu = [0.0] * len(chunks)
        flags.append(FLAG_PROBE_FALLBACK)
    rcfg = RolloutConfig(
        rollouts=cfg.rollouts,
        top_k=cfg.top_k,
        alpha=cfg.alpha,
        epsilon=cfg.epsilon,
        reward_strategy=RewardStrategy(cfg.reward_strategy),
        mu_update_mode=cfg.mu_update_mode,
        record_snapshots=cfg.record_snapshots,
    )
    trace = run_rollouts(
        inst,
        chunks,
        init_mu,
        gen,
        rcfg,
        params,
        qa_tmpl,
        gt_chunk_ids=gt_ids,
        config_echo=cfg.to_dict(),
        flags=flags,
    )
    return trace


def cmd_rollout(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    try:
        chat_client = _build_chat_client(cfg)
        embedder = _build_embedder(cfg)
        qa_tmpl = _qa_template(cfg)
        probe_tmpl = _probe_template(cfg)
    except (ConfigError, OSError) as exc:
        logger.error("%s", exc)
        return 2
    params = _gen_params(cfg)
    pool = load_passage_pool(args.pool) if args.pool else None

    load_errors: list[LoadError] = []
    instances = list(load_dataset(args.input, errors=load_errors))
    for err in load_errors:
        logger.warning("%s line %d: %s", args.input, err.line_no, err.message)

    probe_fallbacks = 0
    question_failures = 0
    traces_written = 0
    with open(args.out, "w", encoding="utf-8") as out:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool_exec:
            futures = [
                pool_exec.submit(
                    _run_question, inst, cfg, pool, chat_client, embedder,
                    qa_tmpl, probe_tmpl, params,
                )
                for inst in instances
            ]
            for inst, fut in zip(instances, futures):
                try:
                    trace = fut.result()
                except Exception as exc:
                    logger.error("question %s failed: %s", inst.id, exc)
                    question_failures += 1
                    continue
                if FLAG_PROBE_FALLBACK in trace.flags:
                    probe_fallbacks += 1
                write_trace(trace, out)
                traces_written += 1

    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "questions": len(instances),
        "traces_written": traces_written,
        "load_errors": len(load_errors),
        "probe_fallbacks": probe_fallbacks,
        "question_failures": question_failures,
    }
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
        f.write("\n")
    logger.info(
        "rollout done: %d/%d questions, %d probe fallbacks, %d failures",
        traces_written, len(instances), probe_fallbacks, question_failures,
    )
    if instances and traces_written == 0:
        return 1
    return 0


def cmd_pairs(args: argparse.Namespace) -> int:
    traces = list(read_traces(args.traces))
    built = []
    skipped = 0
    for trace in traces:
        strategy = RewardStrategy(
            args.reward_strategy or trace.config.get("reward_strategy", "full_response")
        )
        records = [
            dataclasses.replace(
                r, reward=response_reward(r.response, trace.gold_answers, strategy)
            )
            if not r.flags
            else r
            for r in trace.records
        ]
        pair = pairs_mod.build_pair(dataclasses.replace(trace, records=records))
        if pair is None:
            skipped += 1
        else:
            built.append(pair)
    count = pairs_mod.emit_pairs(built, args.out)
    logger.info("pairs written: %d (skipped %d)", count, skipped)
    print(f"pairs {count}")
    print(f"skipped {skipped}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    traces = list(read_traces(args.traces))
    if not traces:
        logger.error("no traces found in %s", args.traces)
        return 1
    golds_by_id = {t.question_id: t.gold_answers for t in traces}
    try:
        trend = analysis_mod.quality_trend(traces, golds_by_id, subem_on=cfg.subem_on)
    except ValueError as exc:
        logger.error("%s", exc)
        return 1
    embedder = _build_embedder(cfg)
    div_means = []
    div_vars = []
    pair_count = 0
    diversity_questions = 0
    for trace in traces:
        responses = [r.response for r in trace.records if not r.flags]
        if len(responses) < 2:
            continue
        report = analysis_mod.diversity_stats(responses, embedder)
        div_means.append(report.mean_pairwise_similarity)
        div_vars.append(report.variance_pairwise_similarity)
        pair_count = report.pair_count
        diversity_questions += 1
    report_doc = {
        "question_count": trend.question_count,
        "rollouts": len(traces[0].records),
        "per_step_recall": trend.per_step_recall,
        "per_step_subem": trend.per_step_subem,
        "per_step_reward": trend.per_step_reward,
        "diversity": {
            "mean_pairwise_similarity": sum(div_means) / len(div_means) if div_means else 0.0,
            "variance_pairwise_similarity": sum(div_vars) / len(div_vars) if div_vars else 0.0,
            "pair_count": pair_count,
            "question_count": diversity_questions,
        },
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report_doc, f, ensure_ascii=False, indent=2)
        f.write("\n")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    golds_by_id = {}
    for inst in load_dataset(args.gold):
        golds_by_id[inst.id] = inst.gold_answers
    strategy = RewardStrategy(args.reward_strategy or "full_response")
    subems = []
    f1s = []
    missing = 0
    with open(args.predictions, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            golds = golds_by_id.get(str(obj["id"]))
            if golds is None:
                logger.error("prediction id %r has no gold entry", obj["id"])
                missing += 1
                continue
            pred = str(obj["prediction"])
            target = pred if strategy is RewardStrategy.FULL_RESPONSE else extract_answer(pred)
            subems.append(sub_em(target, golds))
            f1s.append(token_f1(extract_answer(pred), golds))
    if not subems:
        logger.error("no scorable predictions")
        return 1
    print(f"count {len(subems)}")
    print(f"SubEM {100.0 * sum(subems) / len(subems):.2f}")
    print(f"F1 {100.0 * sum(f1s) / len(f1s):.2f}")
    return 0 if missing == 0 else 1


def cmd_chunk(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    for inst in load_dataset(args.input):
        chunks = split_chunks(full_context(inst), cfg.chunk_budget)
        gt_ids = ground_truth_chunk_ids(chunks, inst.gold_answers)
        print(f"{inst.id} chunks={len(chunks)} gt={sorted(gt_ids)}")
        for c in chunks:
            head = c.text[:40].replace("\n", " ")
            print(f"  [{c.index}] tokens={c.token_count} text={head!r}")
    return 0


_CONFIG_FLAGS = [f for f in dataclasses.fields(PipelineConfig)]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    for f in _CONFIG_FLAGS:
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            parser.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                                default=None)
        elif f.type in ("int", int, "int | None"):
            parser.add_argument(flag, dest=f.name, type=int, default=None)
        elif f.type in ("float", float):
            parser.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            parser.add_argument(flag, dest=f.name, default=None)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in _CONFIG_FLAGS
        if getattr(args, f.name, None) is not None
    }
    return load_config(getattr(args, "config", None), overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longmab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rollout", help="run the bandit rollout over a QA file")
    p.add_argument("--input", required=True, help="line-delimited QA file")
    p.add_argument("--pool", help="distractor passage pool for context extension")
    p.add_argument("--out", required=True, help="trace output path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("pairs", help="build preference pairs from traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reward-strategy", dest="reward_strategy", default=None)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("analyze", help="compute trend and diversity reports")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="SubEM/F1 over a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--reward-strategy", dest="reward_strategy", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chunk", help="debug: print chunk boundaries")
    p.add_argument("--input", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_chunk)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return 2
    except OSError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
