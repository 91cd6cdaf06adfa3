"""Deterministic, splittable random streams.

A task's generator depends only on the master seed and the integer keys that
identify the task (query id, trial index, purpose), never on scheduling order,
so results are identical whatever the thread count.
"""
import numpy as np

from dplp.errors import ValidationError

MAX_SEED = 2**64 - 1

# Purpose keys keep the split stream and the mechanism stream of one
# (query, trial) cell independent.
SPLIT_STREAM = 0
MECHANISM_STREAM = 1
GRAPH_STREAM = 2


def task_rng(seed: int, *keys: int) -> np.random.Generator:
    if not 0 <= seed <= MAX_SEED:
        raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(sequence)
