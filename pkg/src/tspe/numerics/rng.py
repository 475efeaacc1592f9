"""Seedable xoshiro256** generator with deterministic stream splitting.

Every stochastic step in the pipeline draws from a :class:`Xoshiro256`
stream derived from the run's master seed.  Child streams are obtained with
:func:`child_seed`, which hashes ``(parent_seed, purpose_tag)`` with BLAKE2b,
so adding a new consumer never perturbs the streams of existing ones.

The state lives in a 4-element ``uint64`` numpy array so the compiled kernels
can advance it in place; the pure-Python kernels read and write the same
array, which keeps both backends on an identical random stream.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
_DOUBLE_UNIT = 1.0 / (1 << 53)


def child_seed(parent: int, tag: str) -> int:
    """Derive a 64-bit seed for the sub-stream named ``tag``."""
    payload = (int(parent) & MASK64).to_bytes(8, "little") + tag.encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_x, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def xoshiro_next(s: list[int]) -> int:
    """Advance the 4-word state list ``s`` in place and return the output."""
    s0, s1, s2, s3 = s
    result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
    t = (s1 << 17) & MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return result


class Xoshiro256:
    """xoshiro256** PRNG seeded through splitmix64."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        x = self.seed
        words = []
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        self.state = np.array(words, dtype=np.uint64)

    def _words(self) -> list[int]:
        return [int(w) for w in self.state]

    def next_u64(self) -> int:
        s = self._words()
        out = xoshiro_next(s)
        self.state[:] = s
        return out

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _DOUBLE_UNIT

    def randbelow(self, n: int) -> int:
        return min(int(self.random() * n), n - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle (same draw order as the kernels)."""
        s = self._words()
        for i in range(len(items) - 1, 0, -1):
            j = int(((xoshiro_next(s) >> 11) * _DOUBLE_UNIT) * (i + 1))
            if j > i:
                j = i
            items[i], items[j] = items[j], items[i]
        self.state[:] = s

    def permutation(self, n: int) -> np.ndarray:
        items = list(range(n))
        self.shuffle(items)
        return np.asarray(items, dtype=np.int64)

    def spawn(self, tag: str) -> "Xoshiro256":
        return Xoshiro256(child_seed(self.seed, tag))

    def numpy_generator(self) -> np.random.Generator:
        """Bulk-draw generator (weights, dropout masks) seeded from this stream."""
        return np.random.Generator(np.random.PCG64(self.next_u64()))


def make_rng(seed: int, tag: str | None = None) -> Xoshiro256:
    return Xoshiro256(child_seed(seed, tag) if tag is not None else seed)
