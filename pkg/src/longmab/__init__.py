"""Bandit-guided chunk sampling for long-context QA preference data.

The pipeline splits a long context into fixed-token-budget chunks, runs a
UCB multi-armed bandit over those chunks to sample diverse responses from a
text-generation service, scores each response against the gold answers, and
turns the best/worst responses into DPO-ready preference pairs.
"""

__version__ = "0.1.0"
