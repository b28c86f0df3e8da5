"""The per-example DPO loss, in plain floats and as the torch training op."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


def dpo_example_loss(
    logp_pol_chosen: float,
    logp_ref_chosen: float,
    logp_pol_rejected: float,
    logp_ref_rejected: float,
    beta: float,
) -> float:
    """-log sigmoid of the beta-scaled margin between the two log-ratios."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    margin = (logp_pol_chosen - logp_ref_chosen) - (logp_pol_rejected - logp_ref_rejected)
    z = -beta * margin
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def dpo_batch_loss(
    logp_pol_chosen: torch.Tensor,
    logp_ref_chosen: torch.Tensor,
    logp_pol_rejected: torch.Tensor,
    logp_ref_rejected: torch.Tensor,
    beta: float,
) -> torch.Tensor:
    """Mean DPO loss over a batch of per-sequence log-probabilities."""
    margin = (logp_pol_chosen - logp_ref_chosen) - (logp_pol_rejected - logp_ref_rejected)
    return F.softplus(-beta * margin).mean()
