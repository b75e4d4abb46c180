"""Named, splittable random substreams derived from one user seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def seed_sequence(seed: int, name: str, *index: int) -> np.random.SeedSequence:
    """Deterministic child sequence for ``(seed, name, *index)``."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(_key(name), *map(int, index)))


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, name, *index))
