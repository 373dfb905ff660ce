"""Shared helpers: seed derivation and vectorized subset machinery."""

from __future__ import annotations

import hashlib
import itertools
from functools import lru_cache

import numpy as np


def derive_seed(seed: int, *tags: object) -> int:
    """Stable 63-bit child seed for a named subcomponent.

    Every consumer of randomness splits off the run seed by name, so the
    streams do not shift when an unrelated component draws more or fewer
    numbers.
    """
    text = repr((int(seed),) + tags).encode()
    digest = hashlib.blake2b(text, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def popcount(a: np.ndarray) -> np.ndarray:
    """Per-element population count of an unsigned integer array."""
    return np.bitwise_count(a)


@lru_cache(maxsize=128)
def combination_rows(n: int, k: int) -> np.ndarray:
    """All k-subsets of range(n), one subset per row, lexicographic order."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int32)
    if k > n:
        return np.zeros((0, k), dtype=np.int32)
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)),
        dtype=np.int32,
        count=_n_choose_k(n, k) * k,
    )
    return flat.reshape(-1, k)


def _n_choose_k(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out
