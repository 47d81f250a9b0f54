"""Seeded random-policy baselines for the gridworld configs.

The recorded per-config means anchor a reproducibility check: anyone can
re-run the same seeded episodes and must land on the stored value.
"""

from __future__ import annotations

import numpy as np

from ..nets import Action
from .base import GameFeatures, run_episode
from .miniarcade import MiniArcade

N_EPISODES = 1000


def uniform_random_policy(rng: np.random.Generator):
    return lambda obs: Action(direction=int(rng.integers(9)),
                              fire=bool(rng.integers(2)))


def measure_baseline(features: GameFeatures, n_episodes: int = N_EPISODES,
                     shape=(6, 8), max_steps: int = 600) -> dict:
    """Mean/min/max random-policy score over episodes seeded 0..n-1."""
    env = MiniArcade(features, shape=shape, max_steps=max_steps)
    scores = []
    for i in range(n_episodes):
        policy = uniform_random_policy(np.random.default_rng([77, i]))
        scores.append(run_episode(env, policy, seed=i).score)
    return {
        "features": features.letters(),
        "n_episodes": n_episodes,
        "mean_score": float(np.mean(scores)),
        "min_score": float(np.min(scores)),
        "max_score": float(np.max(scores)),
    }
