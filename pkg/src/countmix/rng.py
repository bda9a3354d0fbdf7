"""Seeding contract for reproducible, worker-count independent experiments.

Every unit of work (a Table 1 cell, a chunk of coupling replicates, an exported
path) draws from its own stream, derived only from the master seed and the
unit's integer coordinates.  Scheduling order therefore never changes results.
"""

from __future__ import annotations

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for work unit ``key`` under ``master_seed``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
