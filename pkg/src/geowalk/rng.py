"""Counter-based random streams.

Every stochastic routine takes its randomness from a stream keyed by
``(seed, *key)``. Streams with different keys are statistically
independent and can be created in any order, so results never depend on
how replicas are scheduled across workers.
"""
from __future__ import annotations

import numpy as np

# key namespaces, so that e.g. walk block 3 and brownian block 3 never collide
WALK = 1
BROWNIAN = 2
SDE = 3
SEMIGROUP = 4
MISC = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return a Philox generator for the stream identified by ``(seed, *key)``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an integer seed, or None (seed 0)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))


def blocks(total: int, block_size: int):
    """Yield ``(index, start, stop)`` for fixed-size replica blocks."""
    start = 0
    i = 0
    while start < total:
        stop = min(total, start + block_size)
        yield i, start, stop
        i += 1
        start = stop
