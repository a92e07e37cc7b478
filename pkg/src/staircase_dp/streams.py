"""Reproducible random streams.

A single integer seed expands into independent PCG64 generators, one per
block of ``BLOCK`` draws: block ``k`` is seeded by
``SeedSequence(seed, spawn_key=(k,))``.  Every block is generated in full and
the result is sliced, so the first ``n`` values never depend on ``n`` and
blocks can be produced in any order.
"""

from __future__ import annotations

import numpy as np

from .mechanisms import sample

BLOCK = 65536


def block_generator(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(k),))))


def n_blocks(n: int) -> int:
    return -(-int(n) // BLOCK)


def sample_stream(mech, n: int, seed: int) -> np.ndarray:
    """``n`` noise draws from ``mech``; a prefix of the draws for any larger ``n``."""
    if n <= 0:
        return np.empty(0)
    parts = [sample(mech, block_generator(seed, k), size=BLOCK).value for k in range(n_blocks(n))]
    return np.concatenate(parts)[:n]


def uniform_stream(n: int, seed: int) -> np.ndarray:
    if n <= 0:
        return np.empty(0)
    parts = [block_generator(seed, k).random(BLOCK) for k in range(n_blocks(n))]
    return np.concatenate(parts)[:n]
