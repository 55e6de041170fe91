"""
Seed derivation helpers.

Every random draw in the lab goes through an explicit `numpy.random.Generator`.
Independent streams are derived from (root seed, index) pairs with
`SeedSequence`, so per-image work can run on any thread in any order.
"""
from typing import Sequence, Tuple

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a non-negative seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_seed(root_seed: int, *path: int) -> int:
    """Derive a 63-bit child seed from a root seed and an index path."""
    seq = np.random.SeedSequence([int(root_seed), *[int(p) for p in path]])
    state = seq.generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def derive_rngs(root_seed: int, count: int) -> Sequence[np.random.Generator]:
    """Independent generators for indices 0..count-1."""
    return [make_rng(derive_seed(root_seed, i)) for i in range(count)]


def degradation_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """(theta sampling, pixel/kernel noise) streams of one image seed."""
    return make_rng(derive_seed(seed, 0)), make_rng(derive_seed(seed, 1))
