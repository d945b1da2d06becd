"""Counter-based deterministic random streams.

Every draw is a pure function of (seed, counter), so identical streams
replay identically on any platform and derived streams can be consumed
in any order without sharing state. The generator is the SplitMix64
finalizer applied to a strided counter, which is statistically solid for
Monte Carlo work at this scale and trivially reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALGORITHM = "splitmix64-counter"

# Uniform draws are clamped away from {0, 1} so -log(-log(u)) stays finite.
UNIFORM_EPS = 1e-12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


@dataclass
class RandomStream:
    """Deterministic stream of random values addressed by (seed, counter)."""

    seed: int
    counter: int = 0
    algorithm: str = field(default=ALGORITHM, repr=False)

    def __post_init__(self):
        self.seed = int(self.seed) & _U64
        self.counter = int(self.counter)

    def derive(self, label: str) -> "RandomStream":
        """Independent child stream keyed by (seed, label)."""
        tag = _fnv1a64(label.encode("utf-8"))
        child = _mix64(np.array([(self.seed ^ tag) & _U64], dtype=np.uint64))[0]
        return RandomStream(int(child))

    def _raw(self, n: int) -> np.ndarray:
        offsets = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        base = np.uint64(self.seed)
        with np.errstate(over="ignore"):
            return _mix64(base + offsets * _GOLDEN)

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 draws in (UNIFORM_EPS, 1 - UNIFORM_EPS)."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS)
        return u.reshape(shape)

    def gumbel(self, shape=()) -> np.ndarray:
        """Standard Gumbel(0, 1) draws via the double-log transform."""
        u = self.uniform(shape)
        return -np.log(-np.log(u))

    def normal(self, shape=(), std: float = 1.0) -> np.ndarray:
        """N(0, std^2) draws via Box-Muller (cosine branch)."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = self.uniform((2, n))
        z = np.sqrt(-2.0 * np.log(u[0])) * np.cos(2.0 * np.pi * u[1])
        return (std * z).reshape(shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Integer draws in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        u = self.uniform(shape)
        return (low + np.floor(u * (high - low))).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n)."""
        return np.argsort(self.uniform((n,)), kind="stable")

    def choose(self, n: int, k: int) -> np.ndarray:
        """k draws from range(n) without replacement, sorted ascending."""
        if not 1 <= k <= n:
            raise ValueError(f"cannot choose {k} of {n} without replacement")
        return np.sort(self.permutation(n)[:k])


def _as_shape(shape) -> tuple:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)
