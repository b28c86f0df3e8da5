"""UCB multi-armed bandit over context chunks: scoring, top-K, updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

MU_UPDATE_GLOBAL_T = "verbatim_global_t"
MU_UPDATE_PER_ARM = "per_arm_mean"


@dataclass(frozen=True)
class ArmStats:
    index: int
    mu: float
    n: int


@dataclass(frozen=True)
class BanditState:
    """Per-question bandit state; one arm per context chunk.

    ``t`` is the global rollout step, starting at 1. In the default update
    mode the incremental mean weights by ``t`` rather than the arm's own
    visit count; ``per_arm_mean`` switches to the per-arm average.
    """

    arms: tuple[ArmStats, ...]
    t: int
    alpha: float
    epsilon: float
    k: int
    mu_update_mode: str = MU_UPDATE_GLOBAL_T


def init_state(
    initial_mu: list[float],
    alpha: float,
    epsilon: float,
    k: int,
    mu_update_mode: str = MU_UPDATE_GLOBAL_T,
) -> BanditState:
    """Build a fresh state with probe-derived initial expected rewards."""
    if not initial_mu:
        raise ValueError("initial_mu must be non-empty")
    if any(not math.isfinite(m) for m in initial_mu):
        raise ValueError("initial_mu entries must be finite")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    if mu_update_mode not in (MU_UPDATE_GLOBAL_T, MU_UPDATE_PER_ARM):
        raise ValueError(f"unknown mu_update_mode: {mu_update_mode!r}")
    arms = tuple(ArmStats(index=i, mu=float(m), n=0) for i, m in enumerate(initial_mu))
    return BanditState(
        arms=arms, t=1, alpha=alpha, epsilon=epsilon, k=k, mu_update_mode=mu_update_mode
    )


def ucb_scores(state: BanditState) -> list[float]:
    """Score each arm as mu_i + alpha * sqrt(2 ln t / (n_i + epsilon)).

    At t = 1 the exploration bonus is exactly zero, so scores equal the
    initial expected rewards.
    """
    log_t = math.log(state.t)
    return [
        arm.mu + state.alpha * math.sqrt(2.0 * log_t / (arm.n + state.epsilon))
        for arm in state.arms
    ]


def select_top_k(scores: list[float], k: int) -> list[int]:
    """Indices of the min(k, n) highest scores, ties to the lower index.

    The result is sorted ascending by index.
    """
    if not scores:
        raise ValueError("scores must be non-empty")
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(ranked[: min(k, len(scores))])


def update(state: BanditState, selected: list[int], reward: float) -> BanditState:
    """Fold one rollout's reward into the selected arms and advance t.

    Selected arms get n_i += 1 and the incremental-mean mu update; other
    arms are untouched. Note the default mode weights the old mean by the
    global step: mu <- ((t - 1) * mu + r) / t, which at t = 1 overwrites
    any probe-derived prior.
    """
    if not math.isfinite(reward):
        raise ValueError("reward must be finite")
    n_arms = len(state.arms)
    chosen = set(selected)
    for i in chosen:
        if not 0 <= i < n_arms:
            raise IndexError(f"arm index out of range: {i}")
    t = state.t
    arms = []
    for arm in state.arms:
        if arm.index not in chosen:
            arms.append(arm)
            continue
        if state.mu_update_mode == MU_UPDATE_GLOBAL_T:
            mu = ((t - 1) * arm.mu + reward) / t
        else:
            mu = (arm.n * arm.mu + reward) / (arm.n + 1)
        arms.append(ArmStats(index=arm.index, mu=mu, n=arm.n + 1))
    return replace(state, arms=tuple(arms), t=t + 1)
