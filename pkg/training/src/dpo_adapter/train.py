"""DPO training loop over a pairs file, against a frozen reference copy."""

from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import dataclass, field

import torch
from torch import nn

from .data import ByteTokenizer, PairExample, load_pairs, truncate_prompt_ids
from .loss import dpo_batch_loss

logger = logging.getLogger(__name__)

TINY_MODEL_ID = "tiny"
LORA_TARGETS = ("c_attn", "q_proj", "k_proj", "v_proj", "o_proj")


@dataclass
class TrainRun:
    pairs_path: str
    base_model: str
    output_dir: str
    beta: float = 0.1
    learning_rate: float = 2e-5
    epochs: int = 2
    adapter: str = "lora"
    max_seq_len: int = 512
    batch_size: int = 2
    lora_rank: int = 8
    lora_alpha: float = 16.0
    seed: int = 42

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.adapter not in ("lora", "full"):
            raise ValueError(f"unknown adapter kind: {self.adapter!r}")


@dataclass
class TrainResult:
    steps: int
    metrics: list[dict] = field(default_factory=list)
    adapter_path: str = ""
    metrics_path: str = ""


class LoRAWrapper(nn.Module):
    """Adds a trainable low-rank delta to a frozen linear-style module.

    Works for both nn.Linear and transformers Conv1D since both map the
    last input dimension to the output dimension.
    """

    def __init__(self, base: nn.Module, in_features: int, out_features: int,
                 rank: int, alpha: float):
        super().__init__()
        self.base = base
        self.lora_a = nn.Parameter(torch.randn(in_features, rank) * 0.01)
        # zero-init B so the wrapped module starts exactly equal to the base
        self.lora_b = nn.Parameter(torch.zeros(rank, out_features))
        self.scale = alpha / rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + (x @ self.lora_a @ self.lora_b) * self.scale


def _linear_shape(module: nn.Module) -> tuple[int, int] | None:
    if isinstance(module, nn.Linear):
        return module.in_features, module.out_features
    if type(module).__name__ == "Conv1D" and hasattr(module, "weight"):
        in_features, out_features = module.weight.shape
        return in_features, out_features
    return None


def inject_lora(model: nn.Module, rank: int, alpha: float,
                targets: tuple[str, ...] = LORA_TARGETS) -> int:
    """Freeze the model and wrap matching projection layers with LoRA."""
    for p in model.parameters():
        p.requires_grad_(False)
    wrapped = 0
    for parent_name, parent in list(model.named_modules()):
        for child_name, child in list(parent.named_children()):
            if not any(child_name == t or child_name.endswith(t) for t in targets):
                continue
            shape = _linear_shape(child)
            if shape is None:
                continue
            setattr(parent, child_name, LoRAWrapper(child, *shape, rank, alpha))
            wrapped += 1
    if wrapped == 0:
        raise ValueError("no LoRA target layers found in the base model")
    return wrapped


def load_model_and_tokenizer(base_model: str, seed: int, max_seq_len: int):
    """Load a hub model, or construct the random-init byte-level smoke model."""
    if base_model == TINY_MODEL_ID or base_model.startswith("tiny:"):
        from transformers import GPT2Config, GPT2LMHeadModel

        n_embd, n_layer = 32, 2
        if base_model.startswith("tiny:"):
            n_embd, n_layer = (int(x) for x in base_model.split(":")[1].split("x"))
        tokenizer = ByteTokenizer()
        # dropout off so policy and reference stay comparable under DPO
        config = GPT2Config(
            vocab_size=tokenizer.vocab_size,
            n_positions=max(512, max_seq_len),
            n_embd=n_embd,
            n_layer=n_layer,
            n_head=2,
            bos_token_id=tokenizer.eos_id,
            eos_token_id=tokenizer.eos_id,
            resid_pdrop=0.0,
            embd_pdrop=0.0,
            attn_pdrop=0.0,
        )
        torch.manual_seed(seed)
        return GPT2LMHeadModel(config), tokenizer

    from transformers import AutoModelForCausalLM, AutoTokenizer

    model = AutoModelForCausalLM.from_pretrained(base_model)
    tokenizer = AutoTokenizer.from_pretrained(base_model)
    return model, tokenizer


def sequence_logprob(model: nn.Module, prompt_ids: list[int],
                     response_ids: list[int]) -> torch.Tensor:
    """Sum of response-token log-probabilities given the prompt prefix."""
    ids = torch.tensor([prompt_ids + response_ids], dtype=torch.long)
    logits = model(input_ids=ids).logits[0]
    logps = torch.log_softmax(logits.float(), dim=-1)
    start = len(prompt_ids) - 1
    targets = torch.tensor(response_ids, dtype=torch.long)
    rows = torch.arange(start, start + len(response_ids))
    return logps[rows, targets].sum()


def _tokenize_example(tokenizer, ex: PairExample, max_seq_len: int):
    # reserve up to half the window for the longer response
    longest = max(len(tokenizer.encode(ex.chosen)), len(tokenizer.encode(ex.rejected))) + 1
    reserve = min(longest, max_seq_len // 2)
    prompt_ids = truncate_prompt_ids(tokenizer, ex.context, ex.question, max_seq_len - reserve)
    budget = max_seq_len - len(prompt_ids)
    eos = [tokenizer.eos_id] if hasattr(tokenizer, "eos_id") else []
    chosen_ids = (tokenizer.encode(ex.chosen) + eos)[:budget]
    rejected_ids = (tokenizer.encode(ex.rejected) + eos)[:budget]
    return prompt_ids, chosen_ids, rejected_ids


def train(run: TrainRun) -> TrainResult:
    """Run DPO for the configured epochs; returns metrics and output paths.

    The reference model is a frozen copy of the initial policy, so the
    first reported loss sits at ln 2 up to numerical noise.
    """
    examples = load_pairs(run.pairs_path)
    if not examples:
        raise ValueError("pairs file is empty")
    policy, tokenizer = load_model_and_tokenizer(run.base_model, run.seed, run.max_seq_len)
    reference = copy.deepcopy(policy)
    reference.eval()
    for p in reference.parameters():
        p.requires_grad_(False)

    if run.adapter == "lora":
        wrapped = inject_lora(policy, run.lora_rank, run.lora_alpha)
        logger.info("LoRA injected into %d layers", wrapped)
    trainable = [p for p in policy.parameters() if p.requires_grad]
    if not trainable:
        raise ValueError("no trainable parameters")
    optimizer = torch.optim.AdamW(trainable, lr=run.learning_rate)

    tokenized = [_tokenize_example(tokenizer, ex, run.max_seq_len) for ex in examples]
    metrics: list[dict] = []
    step = 0
    policy.train()
    for epoch in range(run.epochs):
        for start in range(0, len(tokenized), run.batch_size):
            batch = tokenized[start : start + run.batch_size]
            lp_pc, lp_rc, lp_pr, lp_rr = [], [], [], []
            for prompt_ids, chosen_ids, rejected_ids in batch:
                lp_pc.append(sequence_logprob(policy, prompt_ids, chosen_ids))
                lp_pr.append(sequence_logprob(policy, prompt_ids, rejected_ids))
                with torch.no_grad():
                    lp_rc.append(sequence_logprob(reference, prompt_ids, chosen_ids))
                    lp_rr.append(sequence_logprob(reference, prompt_ids, rejected_ids))
            loss = dpo_batch_loss(
                torch.stack(lp_pc), torch.stack(lp_rc),
                torch.stack(lp_pr), torch.stack(lp_rr), run.beta,
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            loss_val = float(loss.detach())
            metrics.append({"step": step, "epoch": epoch + 1, "loss": loss_val})
            logger.info("step %d epoch %d loss %.6f", step, epoch + 1, loss_val)

    os.makedirs(run.output_dir, exist_ok=True)
    adapter_path = os.path.join(run.output_dir, "adapter.pt")
    state = {
        name: param.detach().cpu()
        for name, param in policy.named_parameters()
        if param.requires_grad
    }
    torch.save(state, adapter_path)
    metrics_path = os.path.join(run.output_dir, "metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as f:
        for row in metrics:
            f.write(json.dumps(row) + "\n")
    return TrainResult(
        steps=step, metrics=metrics, adapter_path=adapter_path, metrics_path=metrics_path
    )
