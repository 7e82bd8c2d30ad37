"""Deterministic random streams.

Every stochastic step in the package draws from a counter-based Philox
stream keyed by the run seed plus a short purpose tag, e.g.
``stream(seed, "shifts")`` or ``stream(seed, "narrowing", round_idx)``.
Distinct tags give statistically independent streams, and a given
(seed, tags) pair always yields the same values no matter what else has
been drawn, so pipelines stay reproducible when stages are added,
removed, or run concurrently.

Per-ion values are drawn as whole arrays in one call with a fixed
row-per-ion layout, which keeps results independent of how consumers
later chunk or parallelize over ions.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _tag_word(tags: tuple) -> int:
    digest = hashlib.blake2s(repr(tags).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, *tags) -> np.random.Generator:
    """Return an independent Generator for (seed, tags).

    The Philox key is 128 bits: the seed in the low word and a hash of
    the purpose tags in the high word.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(_tag_word(tags))])
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(seed: int, *tags) -> int:
    """Derive a plain integer seed for a sub-task keyed by (seed, tags)."""
    return int(stream(seed, *tags).integers(2 ** 62))
