"""Reproducible random substreams.

Every block of replicates draws from its own generator derived from
``(seed, block_index)`` through :class:`numpy.random.SeedSequence`.  The
derivation only depends on the block index, so results do not change with
the number of worker processes.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def substream(seed: int, index: int, tag: int = 0) -> np.random.Generator:
    """Generator for block ``index`` of the experiment seeded with ``seed``.

    ``tag`` separates independent simulations inside one experiment (for
    example the two sides of a two-sample comparison).
    """
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=(int(tag), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
