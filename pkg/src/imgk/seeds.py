"""Deterministic, order-free seed derivation.

Every stochastic routine takes a 64-bit unsigned seed. Sub-streams (one per
k-means restart, per grid point, per Monte Carlo replication) are derived with
``numpy.random.SeedSequence`` spawn keys, so stream ``i`` depends only on
``(base_seed, i)`` and never on execution order or thread count. Generators
run the counter-based Philox engine.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "generator"]


def derive_seed(base_seed: int, *path: int) -> int:
    """Return the 64-bit seed of the sub-stream identified by ``path``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """Philox generator for a derived (or user-supplied) 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
