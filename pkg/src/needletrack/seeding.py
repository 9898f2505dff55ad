"""Named RNG sub-streams derived from a single experiment seed.

Every stochastic component (dataset generation, train/test split, weight
init, dropout, batch shuffling) draws from its own stream, so re-seeding
one component never perturbs the others.
"""

from __future__ import annotations

import numpy as np

STREAMS = {"dataset": 0, "split": 1, "init": 2, "dropout": 3, "shuffle": 4}


def stream_seed(seed: int, stream: str) -> list[int]:
    """Seed material for np.random.default_rng, unique per (seed, stream)."""
    return [int(seed), STREAMS[stream]]


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, stream))
