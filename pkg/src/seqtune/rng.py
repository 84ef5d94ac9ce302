"""Counter-based random streams derived from (master seed, purpose tags)."""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_words(tag) -> list[int]:
    if isinstance(tag, (int, np.integer)):
        return [int(tag) & 0xFFFFFFFF, (int(tag) >> 32) & 0xFFFFFFFF]
    digest = hashlib.blake2s(str(tag).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def derive(master_seed: int, *tags) -> np.random.Generator:
    """Return a Philox generator keyed by the master seed and purpose tags.

    Philox is counter-based, so streams for distinct (seed, tags) tuples are
    independent and the draw order inside one stream never depends on what
    other streams were consumed first. Identical inputs give bit-identical
    streams across runs and platforms.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        entropy.extend(_tag_words(tag))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(master_seed: int, *tags) -> int:
    """Derive a plain integer seed (for recording in artifacts)."""
    return int(derive(master_seed, *tags).integers(0, 2**63 - 1))
