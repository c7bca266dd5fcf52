"""Seeded, splittable random streams.

Every randomized construction in the package draws from a :class:`SeedSpec`.
A spec is a (master seed, 64-bit stream key) pair; child streams are derived
with a SplitMix64 finalizer so that the stream used for, say, row tile 17 of a
sketch never depends on how many tiles were processed before it or on which
thread processed them.  The bits inside one stream come from a counter-based
Philox generator keyed by the stream key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

ENV_SEED = "SKETCHREG_SEED"
DEFAULT_SEED = 20160101


def splitmix64(z):
    """SplitMix64 finalizer on a Python int or a uint64 array."""
    if isinstance(z, (int, np.integer)):
        z = int(z) & _MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def derive_key(master, index):
    """Stream key for ``index`` under ``master``; vectorized over ``index``."""
    base = splitmix64(int(master) & _MASK)
    if isinstance(index, (int, np.integer)):
        return splitmix64((base + _GOLDEN * (int(index) + 1)) & _MASK)
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(base) + np.uint64(_GOLDEN) * (idx + np.uint64(1))
    return splitmix64(z)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int

    def spawn(self, index: int) -> "SeedSpec":
        """Child stream; children of distinct indices are independent."""
        return SeedSpec(self.master_seed, derive_key(self.stream_id, index))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.stream_id))


def derive_stream(master: int, index: int) -> SeedSpec:
    return SeedSpec(int(master) & _MASK, derive_key(master, index))


def as_seedspec(seed) -> SeedSpec:
    """Accept an int, a SeedSpec or None (environment/default seed)."""
    if isinstance(seed, SeedSpec):
        return seed
    if seed is None:
        seed = resolve_master_seed()
    return derive_stream(int(seed), 0)


def resolve_master_seed(flag=None) -> int:
    """Master seed with precedence: explicit flag, $SKETCHREG_SEED, default."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(ENV_SEED)
    if env:
        return int(env, 0)
    return DEFAULT_SEED


DISTRIBUTIONS = ("normal", "rademacher", "cauchy", "exponential", "uniform", "uniform_index")


def draw(stream, dist: str, n, s: int | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. samples (``n`` may be a shape tuple).

    ``stream`` is a SeedSpec or an already-open Generator; passing the
    generator lets a caller draw several arrays from one stream in sequence.

    Cauchy variates are ``tan(pi*(u - 1/2))`` and exponential variates are
    ``-ln(u)`` with ``u`` uniform on (0, 1], so each sample consumes exactly
    one uniform.
    """
    gen = stream.generator() if isinstance(stream, SeedSpec) else stream
    if dist == "normal":
        return gen.standard_normal(n)
    if dist == "rademacher":
        return gen.integers(0, 2, size=n, dtype=np.int8).astype(np.float64) * 2.0 - 1.0
    if dist == "uniform":
        return gen.random(n)
    if dist == "cauchy":
        return np.tan(np.pi * (gen.random(n) - 0.5))
    if dist == "exponential":
        return -np.log1p(-gen.random(n))
    if dist == "uniform_index":
        if s is None or s < 1:
            raise ValueError("uniform_index needs s >= 1")
        return gen.integers(0, s, size=n)
    raise ValueError(f"unknown distribution {dist!r}")
