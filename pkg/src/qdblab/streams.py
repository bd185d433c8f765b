"""Seeded, splittable random streams (Philox counter-based generator)."""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the node ``path`` under the root ``seed``."""
    ss = np.random.SeedSequence(seed & SEED_MASK, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *path: int) -> int:
    """A 64-bit seed for a sub-experiment, derived through the same tree."""
    ss = np.random.SeedSequence(seed & SEED_MASK, spawn_key=tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])
