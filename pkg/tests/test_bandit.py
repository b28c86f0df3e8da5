import dataclasses
import math
import random

import pytest

from longmab.bandit import (
    MU_UPDATE_GLOBAL_T,
    MU_UPDATE_PER_ARM,
    ArmStats,
    init_state,
    select_top_k,
    ucb_scores,
    update,
)


def eq6(mu: float, n: int, t: int, alpha: float, epsilon: float) -> float:
    return mu + alpha * math.sqrt(2.0 * math.log(t) / (n + epsilon))


class TestInitState:
    def test_two_arms(self):
        state = init_state([0.2, 0.8], alpha=1.0, epsilon=1e-6, k=2)
        assert [(a.mu, a.n) for a in state.arms] == [(0.2, 0), (0.8, 0)]
        assert state.t == 1

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            init_state([0.2, float("nan")], alpha=1.0, epsilon=1e-6, k=1)

    def test_twenty_arms_in_order(self):
        mus = [i / 20 for i in range(20)]
        state = init_state(mus, alpha=1.0, epsilon=1e-6, k=4)
        assert [a.index for a in state.arms] == list(range(20))
        assert [a.mu for a in state.arms] == mus

    def test_guards(self):
        with pytest.raises(ValueError):
            init_state([], 1.0, 1e-6, 1)
        with pytest.raises(ValueError):
            init_state([0.1], 1.0, 0.0, 1)
        with pytest.raises(ValueError):
            init_state([0.1], 1.0, 1e-6, 0)
        with pytest.raises(ValueError):
            init_state([0.1], -0.5, 1e-6, 1)


class TestUcbScores:
    def test_t1_bonus_is_exactly_zero(self):
        state = init_state([0.3, -0.2, 0.9], alpha=2.5, epsilon=1e-6, k=1)
        assert ucb_scores(state) == [0.3, -0.2, 0.9]

    def test_direct_evaluation(self):
        state = init_state([0.5], alpha=1.0, epsilon=1e-6, k=1)
        state = update(state, [0], 0.5)  # mu stays 0.5 at t=1, n -> 1
        for _ in range(6):  # advance t to 8 without touching arm 0 stats
            state = update(state, [], 0.0)
        assert state.t == 8
        assert state.arms[0].mu == 0.5 and state.arms[0].n == 1
        expected = 0.5 + math.sqrt(2 * math.log(8) / (1 + 1e-6))
        assert ucb_scores(state)[0] == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(2.5393, abs=5e-5)

    def test_alpha_zero_is_pure_exploitation(self):
        state = init_state([0.4, 0.1], alpha=0.0, epsilon=1e-6, k=1)
        for reward in [1.0, 0.0, 0.5]:
            state = update(state, [0], reward)
            assert ucb_scores(state) == [state.arms[0].mu, state.arms[1].mu]

    def test_matches_eq6_on_random_tuples(self):
        rng = random.Random(99)
        for _ in range(300):
            n_arms = rng.randint(1, 8)
            mus = [rng.uniform(-1, 1) for _ in range(n_arms)]
            alpha = rng.uniform(0, 3)
            epsilon = 10 ** rng.uniform(-9, -1)
            state = init_state(mus, alpha=alpha, epsilon=epsilon, k=1)
            # walk t forward with arbitrary updates
            for _ in range(rng.randint(0, 10)):
                sel = [i for i in range(n_arms) if rng.random() < 0.4]
                state = update(state, sel, rng.uniform(0, 1))
            got = ucb_scores(state)
            for i, arm in enumerate(state.arms):
                want = eq6(arm.mu, arm.n, state.t, alpha, epsilon)
                assert abs(got[i] - want) <= 1e-12


class TestSelectTopK:
    def test_sorted_by_hand(self):
        assert select_top_k([0.9, 0.2, 0.5, 0.7], 2) == [0, 3]

    def test_k_at_least_len(self):
        assert select_top_k([0.1, 0.2], 5) == [0, 1]

    def test_tie_breaks_to_lower_index(self):
        assert select_top_k([0.5, 0.5, 0.1], 1) == [0]

    def test_result_sorted_ascending(self):
        rng = random.Random(12)
        for _ in range(100):
            scores = [rng.random() for _ in range(rng.randint(1, 12))]
            k = rng.randint(1, 14)
            sel = select_top_k(scores, k)
            assert sel == sorted(sel)
            assert len(sel) == min(k, len(scores))
            # every selected score >= every unselected score
            unsel = [i for i in range(len(scores)) if i not in sel]
            if unsel:
                assert min(scores[i] for i in sel) >= max(scores[i] for i in unsel)


class TestUpdate:
    def test_probe_prior_overwritten_at_t1(self):
        state = init_state([0.73], alpha=1.0, epsilon=1e-6, k=1)
        state = update(state, [0], 0.9)
        assert state.arms[0].mu == 0.9
        assert state.arms[0].n == 1
        assert state.t == 2

    def test_direct_evaluation_at_t3(self):
        state = init_state([0.6], alpha=1.0, epsilon=1e-6, k=1)
        state = dataclasses.replace(state, arms=(ArmStats(index=0, mu=0.6, n=2),), t=3)
        state = update(state, [0], 0.9)
        # (2 * 0.6 + 0.9) / 3
        assert state.arms[0].mu == pytest.approx(0.7, abs=1e-15)

    def test_unselected_arm_unchanged(self):
        state = init_state([0.4, 0.8], alpha=1.0, epsilon=1e-6, k=1)
        state = update(state, [1], 1.0)
        state = update(state, [1], 0.0)
        assert state.arms[0].mu == 0.4 and state.arms[0].n == 0

    def test_out_of_range_selected(self):
        state = init_state([0.4], alpha=1.0, epsilon=1e-6, k=1)
        with pytest.raises(IndexError):
            update(state, [3], 0.5)

    def test_nonfinite_reward(self):
        state = init_state([0.4], alpha=1.0, epsilon=1e-6, k=1)
        with pytest.raises(ValueError):
            update(state, [0], float("inf"))


def replay_global_t(n_arms: int, history: list[tuple[list[int], float]]) -> list[float]:
    """Closed-form recomputation of the global-t incremental average."""
    mu = [0.0] * n_arms
    for t, (selected, reward) in enumerate(history, start=1):
        for i in selected:
            mu[i] = ((t - 1) * mu[i] + reward) / t
    return mu


class TestUpdateLawReplay:
    def test_200_step_random_history(self):
        rng = random.Random(777)
        n_arms, k = 12, 4
        state = init_state([0.0] * n_arms, alpha=1.0, epsilon=1e-6, k=k)
        history = []
        for _ in range(200):
            selected = sorted(rng.sample(range(n_arms), k))
            reward = rng.uniform(0, 1)
            state = update(state, selected, reward)
            history.append((selected, reward))
        want_mu = replay_global_t(n_arms, history)
        for arm, want in zip(state.arms, want_mu):
            assert abs(arm.mu - want) <= 1e-12
        assert sum(a.n for a in state.arms) == 200 * k
        assert state.t == 201

    def test_per_arm_mean_mode_is_arithmetic_mean(self):
        rng = random.Random(778)
        n_arms, k = 10, 3
        state = init_state(
            [rng.uniform(0, 1) for _ in range(n_arms)],
            alpha=1.0, epsilon=1e-6, k=k, mu_update_mode=MU_UPDATE_PER_ARM,
        )
        received: dict[int, list[float]] = {i: [] for i in range(n_arms)}
        for _ in range(200):
            selected = sorted(rng.sample(range(n_arms), k))
            reward = rng.uniform(0, 1)
            state = update(state, selected, reward)
            for i in selected:
                received[i].append(reward)
        for arm in state.arms:
            if received[arm.index]:
                mean = sum(received[arm.index]) / len(received[arm.index])
                assert abs(arm.mu - mean) <= 1e-12

    def test_modes_agree_on_first_selection_at_t1(self):
        for mode in (MU_UPDATE_GLOBAL_T, MU_UPDATE_PER_ARM):
            state = init_state([0.73, 0.2], alpha=1.0, epsilon=1e-6, k=1, mu_update_mode=mode)
            state = update(state, [0], 0.9)
            assert state.arms[0].mu == 0.9


class TestInvariants:
    def test_counts_after_t_rollouts(self):
        rng = random.Random(5)
        n_arms, k, steps = 7, 3, 40
        state = init_state([0.0] * n_arms, alpha=1.0, epsilon=1e-6, k=k)
        for _ in range(steps):
            sel = select_top_k(ucb_scores(state), k)
            state = update(state, sel, rng.uniform(0, 1))
        assert sum(a.n for a in state.arms) == steps * k
        assert state.t == steps + 1

    def test_every_arm_visited_early_with_positive_alpha(self):
        # Unvisited arms carry a huge bonus for t >= 2, so they outrank any
        # visited arm while rewards stay in [0, 1].
        n_arms, k = 10, 3
        state = init_state([0.0] * n_arms, alpha=1.0, epsilon=1e-6, k=k)
        rounds_needed = math.ceil(n_arms / k) + 1
        seen: set[int] = set()
        for _ in range(rounds_needed):
            sel = select_top_k(ucb_scores(state), k)
            seen.update(sel)
            state = update(state, sel, 1.0)
        assert seen == set(range(n_arms))

    def test_deterministic_scores(self):
        state = init_state([0.1, 0.2, 0.3], alpha=1.0, epsilon=1e-6, k=2)
        state = update(state, [0, 2], 0.7)
        a = ucb_scores(state)
        b = ucb_scores(state)
        assert a == b
