"""Counter-based random streams keyed by (master seed, pair index, stage)."""

from __future__ import annotations

import zlib

import numpy as np


def stage_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(master_seed: int, pair_index: int, stage: str) -> np.random.Generator:
    """Independent Philox generator for one stage of one observation pair.

    ``pair_index`` is -1 for stages shared across pairs (simulation bank,
    training).
    """
    ss = np.random.SeedSequence([int(master_seed), int(pair_index) + 1, stage_key(stage)])
    return np.random.Generator(np.random.Philox(ss))


def int_seed(master_seed: int, pair_index: int, stage: str) -> int:
    """A 63-bit integer seed derived from the same key (for configs that take ints)."""
    ss = np.random.SeedSequence([int(master_seed), int(pair_index) + 1, stage_key(stage)])
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1 << 31, 1], dtype=np.uint64))
