"""Deterministic RNG streams.

Every stochastic routine draws from a Philox counter-based generator keyed
by a 64-bit master seed and an integer stream id, so independent streams can
be handed to parallel workers without coordination and every output file can
record exact provenance (seed, stream, index).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_SEED = 2**64


def make_generator(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Generator for (seed, stream_id); distinct ids give independent streams."""
    if not 0 <= seed < MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Stream:
    """A seeded stream plus the provenance data recorded in outputs."""

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.generator = make_generator(self.seed, self.stream_id)
