"""Seed derivation and counter-based hashing.

Every random stream in the package is derived from a master seed plus a tuple
of integer keys, so results never depend on call order across components.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed, *keys):
    """Derive an independent 64-bit seed from ``seed`` and integer ``keys``."""
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def make_rng(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))


def splitmix64(x):
    """Vectorised splitmix64 finaliser over a uint64 array."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def hashed_uniform(stream_seed, counters, lane):
    """Uniform draws in [0, 1) keyed by (stream_seed, counter, lane).

    The same key always yields the same value, which makes replayed Monte Carlo
    estimates bit-identical.
    """
    counters = np.asarray(counters, dtype=np.uint64)
    base = splitmix64(np.uint64(int(stream_seed) & _MASK64) ^ np.uint64(lane * 0x632BE59BD9B4E019 & _MASK64))
    h = splitmix64(base ^ splitmix64(counters))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
