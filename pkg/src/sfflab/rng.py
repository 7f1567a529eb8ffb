"""Seeded, scheduling-independent random streams.

Every stream is keyed by ``(master_seed, tag, *indices)`` and backed by the
counter-based Philox bit generator, so realization ``i`` draws the same
numbers whichever worker runs it.
"""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_id(tag):
    return zlib.crc32(tag.encode("utf-8"))


def seed_sequence(master_seed, tag, *indices):
    words = [int(master_seed) & _MASK64, _tag_id(tag)] + [int(i) for i in indices]
    return np.random.SeedSequence(words)


def stream(master_seed, tag, *indices):
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, tag, *indices)))


def derived_seed(master_seed, tag, *indices):
    """A 64-bit integer seed for ``(master_seed, tag, *indices)``."""
    return int(seed_sequence(master_seed, tag, *indices).generate_state(1, np.uint64)[0])
