"""Deterministic random streams derived from a single master seed.

Every stream is addressed by a tuple of non-negative integer keys and
realised as ``PCG64(SeedSequence(seed, spawn_key=keys))``.  Streams with
different keys are statistically independent, and a stream never depends
on how many other streams were drawn before it, so replicate loops can be
split across workers in any order.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator addressed by ``(seed, keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=keys)))


def derive_seed(seed: int, *keys: int) -> int:
    """Return a 64-bit child seed addressed by ``(seed, keys)``."""
    return int(np.random.SeedSequence(seed, spawn_key=keys).generate_state(1, np.uint64)[0])
