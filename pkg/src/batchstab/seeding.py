"""Deterministic seed-substream derivation.

Every random quantity in an experiment is drawn from a substream addressed by
a path of small integers under one master seed, via ``numpy``'s
``SeedSequence`` spawn keys.  Substreams are independent of execution order,
so trial-level parallelism can never reorder draws: trial k always sees the
same bits no matter how many workers run or which finishes first.

Per-trial substream axes:

    DATA streams the training examples,
    REPLACEMENTS the fresh examples used to build neighboring datasets,
    SCHEDULE the batch-selection randomness,
    AUDIT one-shot realizations used by non-Monte-Carlo checks.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, SeedSequence, default_rng

DATA = 0
REPLACEMENTS = 1
SCHEDULE = 2
AUDIT = 3


def substream(master_seed: int, *path: int) -> SeedSequence:
    """Seed sequence at an integer path under the master seed."""
    return SeedSequence(master_seed, spawn_key=tuple(int(p) for p in path))


def rng_at(master_seed: int, *path: int) -> Generator:
    """Generator seeded from the substream at ``path``."""
    return default_rng(substream(master_seed, *path))


def seed_at(master_seed: int, *path: int) -> int:
    """A 63-bit integer seed derived from the substream at ``path``."""
    state = substream(master_seed, *path).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
