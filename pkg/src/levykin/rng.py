"""Deterministic splittable random streams.

Every stochastic routine in this package draws from a RandomStream. A stream
is identified by a 64-bit master seed plus a path of integer keys, and two
streams with different paths are statistically independent. Results therefore
depend only on (seed, path), never on scheduling, chunking, or worker count.

Derivation is bit-exact and documented:

    SeedSequence(entropy=seed, spawn_key=path) -> Philox counter generator

where string keys are mapped through crc32 of their UTF-8 bytes and integer
keys are used as-is. Replaying any (seed, path) pair reproduces the exact
draw sequence on every platform numpy supports.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = ["RandomStream", "key_to_int"]


def key_to_int(key) -> int:
    """Map a stream key (int or str) to a nonnegative 32-bit int."""
    if isinstance(key, (int, np.integer)):
        k = int(key)
        if k < 0:
            raise ValueError(f"stream keys must be nonnegative, got {k}")
        return k
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"stream key must be int or str, got {type(key).__name__}")


@dataclass(frozen=True, slots=True)
class RandomStream:
    """A named position in the deterministic stream tree.

    Parameters
    ----------
    seed : int
        Master seed, 0 <= seed < 2**64.
    path : tuple of int
        Key path from the root. Built via :meth:`child`, rarely by hand.
    """

    seed: int
    path: tuple = ()

    def __post_init__(self):
        s = int(self.seed)
        if not 0 <= s < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", s)
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *keys) -> "RandomStream":
        """Derive a substream; keys may be ints or short strings."""
        return RandomStream(self.seed, self.path + tuple(key_to_int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        """Fresh Generator at this node. Each call restarts the sequence."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))

    def chunk_generators(self, n_chunks: int, tag) -> list[np.random.Generator]:
        """Generators for fixed work chunks, independent of worker count."""
        base = self.child(tag)
        return [base.child(i).generator() for i in range(int(n_chunks))]
