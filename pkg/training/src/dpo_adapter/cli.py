"""Command-line launcher for DPO training runs."""

from __future__ import annotations

import argparse
import logging
import sys

from .train import TrainRun, train

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longmab-dpo")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="DPO fine-tune a base model on a pairs file")
    p.add_argument("--pairs", required=True, help="longmab pairs file (jsonl)")
    p.add_argument("--base-model", required=True,
                   help="model path/id, or 'tiny' / 'tiny:<embd>x<layers>' for a smoke run")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--learning-rate", type=float, default=2e-5)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--adapter", choices=["lora", "full"], default="lora")
    p.add_argument("--max-seq-len", type=int, default=512)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--lora-rank", type=int, default=8)
    p.add_argument("--lora-alpha", type=float, default=16.0)
    p.add_argument("--seed", type=int, default=42)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    run = TrainRun(
        pairs_path=args.pairs,
        base_model=args.base_model,
        output_dir=args.output_dir,
        beta=args.beta,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        adapter=args.adapter,
        max_seq_len=args.max_seq_len,
        batch_size=args.batch_size,
        lora_rank=args.lora_rank,
        lora_alpha=args.lora_alpha,
        seed=args.seed,
    )
    try:
        result = train(run)
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    print(f"steps {result.steps}")
    print(f"first_loss {result.metrics[0]['loss']:.6f}")
    print(f"last_loss {result.metrics[-1]['loss']:.6f}")
    print(f"adapter {result.adapter_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
