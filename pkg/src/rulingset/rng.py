"""Seedable 64-bit generator shared by every randomized part of the toolkit.

The generator is xorshift64* (Marsaglia shifts 12/25/27, multiplier
0x2545F4914F6CDD1D) seeded through one round of splitmix64, so that a run is
reproducible from ``(seed, daemon, graph, initial configuration)`` alone and
can be re-implemented bit-for-bit elsewhere.

Derived draws:

* ``random()``      -> ``(next_u64() >> 11) * 2**-53``
* ``randbelow(n)``  -> rejection sampling on ``next_u64()`` below
  ``2**64 - (2**64 % n)``, then ``% n``
* ``bernoulli(p)``  -> ``random() < p``
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
XORSHIFT_MULT = 0x2545F4914F6CDD1D
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
RNG_NAME = "xorshift64*/splitmix64-v1"


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def seed_state(seed: int) -> int:
    state = splitmix64(seed & MASK64)
    return state if state != 0 else GOLDEN_GAMMA


class Xorshift64Star:
    """Pure-Python generator; the numba twin below consumes the same stream."""

    name = RNG_NAME

    def __init__(self, seed: int = 0):
        self.state = seed_state(seed)

    @classmethod
    def from_state(cls, state: int) -> "Xorshift64Star":
        rng = cls.__new__(cls)
        rng.state = state & MASK64
        return rng

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_MULT) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs n > 0")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def shuffle(self, items: list) -> None:
        """Fisher-Yates, drawing ``randbelow(i + 1)`` for i from the top down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self) -> "Xorshift64Star":
        """Independent child stream seeded from the next draw."""
        return Xorshift64Star(self.next_u64())


def as_rng(rng) -> Xorshift64Star:
    if isinstance(rng, Xorshift64Star):
        return rng
    if rng is None:
        return Xorshift64Star(0)
    return Xorshift64Star(int(rng))


# numba twin: the state lives in a uint64[1] array so it can be threaded
# through compiled loops and handed back to Python.

@njit(cache=True)
def nb_next(state):
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(XORSHIFT_MULT)


@njit(cache=True)
def nb_random(state):
    return float(nb_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def nb_randbelow(state, n):
    un = np.uint64(n)
    # 2**64 % n computed without overflow as (2**64 - n) % n
    rem = (np.uint64(0) - un) % un
    limit = np.uint64(0) - rem
    while True:
        r = nb_next(state)
        if rem == 0 or r < limit:
            return np.int64(r % un)


def to_state_array(rng: Xorshift64Star) -> np.ndarray:
    return np.array([rng.state], dtype=np.uint64)
