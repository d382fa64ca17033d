"""Seeded random streams.

Every draw in the package comes from ``stream(seed, *keys)``: a PCG64
generator keyed by a SeedSequence spawn key. A (seed, trial, purpose)
tuple therefore names one independent stream, and running trials in a
different order or in parallel cannot change any of them.
"""
from __future__ import annotations

import numpy as np

# purpose keys
HIDDEN_SET = 1
DENSE_WEIGHTS = 2
GRAPH = 3
LABELS = 4
SPARSE_WEIGHTS = 5
POPULATION = 6
LOCAL_RULE = 7

MASK64 = (1 << 64) - 1


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def trial_seed(base_seed: int, trial_index: int) -> int:
    """64-bit seed for one trial of a sweep, derived from the base seed."""
    ss = np.random.SeedSequence(int(base_seed) & MASK64, spawn_key=(0, int(trial_index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
