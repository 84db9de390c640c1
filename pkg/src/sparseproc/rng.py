"""Seed derivation and generator construction.

All randomness in the package flows through numpy's PCG64 generator.  Each
Monte Carlo replication owns an independent stream derived from the base
seed, so replications can run on any number of workers in any order and
still reproduce bit-identical output.
"""

import numpy as np

# 64-bit golden-ratio increment; spreads consecutive replication indices
# across the seed space.
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, rep: int) -> int:
    """Seed for replication ``rep``: ``base_seed XOR (rep * GOLDEN_GAMMA)`` mod 2^64."""
    if rep < 0:
        raise ValueError("replication index must be nonnegative")
    return (int(base_seed) & _MASK64) ^ ((rep * GOLDEN_GAMMA) & _MASK64)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a derived seed."""
    return np.random.Generator(np.random.PCG64(seed))
