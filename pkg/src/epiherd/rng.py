"""Seed derivation and named random streams.

Every episode is driven by one 64-bit master seed. Consumers draw from
independent named streams so that adding a new consumer never shifts the
numbers another consumer sees; this is what keeps seed-matched comparisons
across protocols paired.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# stream identifiers are part of the reproducibility contract; never renumber
STREAMS = {
    "target": 1,
    "perturb": 2,
    "move": 3,
    "channel": 4,
}


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into a single 64-bit seed.

    ``derive_seed(base, condition, episode)`` is the episode seed used by the
    experiment runner, so any single episode can be re-run in isolation.
    """
    h = 0
    for part in parts:
        h = splitmix64(h ^ (int(part) & MASK64))
    return h


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Return the generator for stream ``name`` (optionally per agent)."""
    ss = np.random.SeedSequence(entropy=int(seed) & MASK64, spawn_key=(STREAMS[name], index))
    return np.random.Generator(np.random.PCG64(ss))
