"""Deterministic sub-seed derivation.

Every random artifact draws from its own Philox (counter-based) stream,
keyed by the master seed and a fixed stream id, so changing how one
artifact is generated never shifts the numbers another one sees.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "transitions": 0,
    "rewards": 1,
    "features": 2,
    "policy": 3,
    "trajectory": 4,
    "instance": 5,
}


def seed_sequence(seed: int, stream: str, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[stream], *index))


def rng(seed: int, stream: str, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, stream, *index)))


def derive_seed(seed: int, stream: str, *index: int) -> int:
    """A 63-bit integer seed for a child task (e.g. one benchmark instance)."""
    word = seed_sequence(seed, stream, *index).generate_state(1, dtype=np.uint64)[0]
    return int(word >> np.uint64(1))
