"""Seeded, splittable random streams.

All randomness in the library flows through counter-based Philox
generators.  A master seed plus an integer path (experiment, size index,
trial chunk, ...) deterministically identifies a stream, so trials can
run in any order or in parallel and still reproduce bit-identically.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox"


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for `seed` at the given split path."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit sub-seed, for APIs that want an integer rather than a stream."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])
