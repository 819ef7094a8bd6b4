"""Bit-string arithmetic, hypercube neighborhoods, subset sampling, seeded RNG.

Convention used everywhere in this package: bit i of the integer value is the
state of qubit i (little-endian). n is capped at 30 for any dense structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

MAX_DENSE_N = 30


class InvalidDistanceError(ValueError):
    pass


class InvalidLevelError(ValueError):
    pass


@dataclass(frozen=True)
class BitString:
    """An n-bit string stored as an unsigned integer index."""

    value: int
    n: int

    def __post_init__(self):
        if not (1 <= self.n <= MAX_DENSE_N):
            raise ValueError(f"n={self.n} out of range [1, {MAX_DENSE_N}]")
        if not (0 <= self.value < (1 << self.n)):
            raise ValueError(f"value={self.value} out of range for n={self.n}")

    def bit(self, i: int) -> int:
        return (self.value >> i) & 1

    def flip(self, i: int) -> "BitString":
        return BitString(self.value ^ (1 << i), self.n)

    def weight(self) -> int:
        return int(self.value).bit_count()

    def to_str(self) -> str:
        # character j is the state of qubit j
        return "".join(str(self.bit(i)) for i in range(self.n))

    @staticmethod
    def from_str(s: str) -> "BitString":
        value = sum(1 << i for i, c in enumerate(s) if c == "1")
        return BitString(value, len(s))


@dataclass(frozen=True)
class QubitSubset:
    """A sorted nonempty set of distinct qubit positions."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) == 0:
            raise ValueError("subset must be nonempty")
        if list(idx) != sorted(set(idx)):
            raise ValueError("indices must be strictly increasing")

    @property
    def r(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class RandomSource:
    """Counter-based splittable randomness: (seed, stream-id) fixes the stream.

    Children derived through split()/child() get distinct spawn keys, so
    parallel Monte-Carlo shards are reproducible independent of scheduling.
    """

    seed: int
    stream: int = 0
    _path: tuple = field(default=(), repr=False)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self._path))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, i: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream, self._path + (i,))

    def split(self, k: int) -> list:
        return [self.child(i) for i in range(k)]


def hamming(x: int, y: int) -> int:
    return int(x ^ y).bit_count()


def neighbors_at_distance(x: BitString, r: int) -> list:
    """All C(n, r) strings at Hamming distance exactly r from x, ascending."""
    if not (1 <= r <= x.n):
        raise InvalidDistanceError(f"distance r={r} invalid for n={x.n}")
    out = []
    for bits in combinations(range(x.n), r):
        mask = 0
        for b in bits:
            mask |= 1 << b
        out.append(BitString(x.value ^ mask, x.n))
    out.sort(key=lambda b: b.value)
    return out


def subset_count(n: int, m: int, exact_jump: bool = False) -> int:
    """N, the number of admissible qubit subsets (= walk neighbors per vertex)."""
    if exact_jump:
        return comb(n, m)
    return sum(comb(n, k) for k in range(1, m + 1))


def sample_subset(n: int, m: int, rng: np.random.Generator) -> QubitSubset:
    """Uniform over all N = sum_{k=1}^{m} C(n,k) nonempty subsets of size <= m."""
    if not (1 <= m <= n):
        raise InvalidLevelError(f"level m={m} invalid for n={n}")
    sizes = np.arange(1, m + 1)
    weights = np.array([comb(n, int(k)) for k in sizes], dtype=float)
    weights /= weights.sum()
    r = int(rng.choice(sizes, p=weights))
    idx = rng.choice(n, size=r, replace=False)
    return QubitSubset(tuple(sorted(int(i) for i in idx)))


def sample_subset_masks(n: int, m: int, count: int, rng: np.random.Generator,
                        exact_jump: bool = False) -> np.ndarray:
    """Vectorized batch of uniform subset bitmasks (uint32), size <= m each."""
    if not (1 <= m <= n):
        raise InvalidLevelError(f"level m={m} invalid for n={n}")
    if m == 1 and not exact_jump:
        return (np.uint32(1) << rng.integers(0, n, size=count).astype(np.uint32))
    masks = np.empty(count, dtype=np.uint32)
    if exact_jump:
        rs = np.full(count, m)
    else:
        sizes = np.arange(1, m + 1)
        weights = np.array([comb(n, int(k)) for k in sizes], dtype=float)
        weights /= weights.sum()
        rs = rng.choice(sizes, p=weights, size=count)
    for i in range(count):
        idx = rng.choice(n, size=int(rs[i]), replace=False)
        mask = 0
        for b in idx:
            mask |= 1 << int(b)
        masks[i] = mask
    return masks


def mask_to_indices(mask: int) -> tuple:
    out = []
    i = 0
    m = int(mask)
    while m:
        if m & 1:
            out.append(i)
        m >>= 1
        i += 1
    return tuple(out)


def popcount_array(a: np.ndarray) -> np.ndarray:
    """Per-element bit count of a nonnegative integer array."""
    a = np.asarray(a, dtype=np.uint64)
    out = np.zeros(a.shape, dtype=np.int64)
    while a.any():
        out += (a & 1).astype(np.int64)
        a = a >> 1
    return out
