"""Keyed, counter-based randomness.

Every random choice the regularizer makes is a pure function of
``(seed, level, index, observation id, tag)``.  Two runs that reach the
same dyadic node in the same state therefore make the same choices, which
is what couples the early-stopping and the always-splitting recursions.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "keyed_uniform", "make_rng"]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps silently on arrays
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _absorb(h: np.ndarray, word) -> np.ndarray:
    return _mix(h + _GAMMA + np.asarray(word, dtype=np.uint64))


def _u64(value: int) -> np.uint64:
    return np.uint64(int(value) & _MASK64)


def keyed_uniform(seed: int, level, index, ids, tag: int = 0) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), one per entry of `ids`.

    `level` and `index` may be scalars or arrays broadcastable against
    `ids`.  The result is deterministic in all arguments.
    """
    ids = np.asarray(ids, dtype=np.int64).astype(np.uint64)
    level = np.asarray(level, dtype=np.int64).astype(np.uint64)
    index = np.asarray(index, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(np.full(ids.shape, _u64(seed), dtype=np.uint64))
        h = _absorb(h, level)
        h = _absorb(h, index)
        h = _absorb(h, _u64(tag))
        h = _absorb(h, ids)
    # top 53 bits, shifted off zero by half a step
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 63-bit child seed from a master seed and integer keys."""
    with np.errstate(over="ignore"):
        h = _mix(np.array([_u64(master)], dtype=np.uint64))
        for k in keys:
            h = _absorb(h, _u64(k))
    return int(h[0]) >> 1


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """A numpy Generator owned by one caller, derived from `seed` and `keys`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & _MASK64, *keys]))
