"""Deterministic, splittable randomness built on the Philox counter-based generator.

Every randomized operation in the package consumes an explicit :class:`RngState`.
Equal states produce bit-equal outputs across runs and platforms; independent
streams are derived by key, never by jumping a shared generator, so parallel
consumers (one per hash function, per trial, ...) stay reproducible individually.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    # SplitMix64 finalizer; full-period bijection on 64-bit ints.
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_stream(stream: int, index: int) -> int:
    """Mix a child index into a stream id.

    Nested derivations (trial -> hash function -> ...) land on distinct
    streams with collision probability ~2^-64 per pair.
    """
    return _splitmix64((stream + _GOLDEN) ^ _splitmix64(index + _GOLDEN))


@dataclass(frozen=True)
class RngState:
    """Seed plus stream id addressing one Philox random stream.

    The state is a value, not a generator: it can be copied, stored in
    configs, and turned into a fresh ``numpy.random.Generator`` any number
    of times, always yielding the same sequence.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngState":
        """Independent sub-stream for the given index (hash id, trial id, ...)."""
        return RngState(self.seed, derive_stream(self.stream, index))


def gaussian_matrix(rows: int, cols: int, rng: RngState) -> np.ndarray:
    """Dense matrix of i.i.d. standard normals, deterministic in ``rng``."""
    return rng.generator().standard_normal((rows, cols))
