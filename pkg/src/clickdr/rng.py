"""Deterministic random streams for the click simulation.

Every session gets its own stream, seeded from the master seed, the query id
and the session index.  This makes the simulation output independent of
execution order: a session's draws never depend on how many other sessions
were simulated before it.

The generator is SplitMix64.  A vectorised variant produces the exact same
uniform sequence for a whole batch of seeds at once, which is what
``build_click_log`` uses for speed; the scalar class is the reference.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of a string (UTF-8 bytes)."""
    h = _FNV_BASIS
    for b in text.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def seed_derive(master_seed: int, query_id: str, session_index: int) -> int:
    """Stable per-(query, session) seed: SplitMix64 scramble of
    master XOR FNV-1a(query_id) XOR session_index."""
    x = (master_seed & _MASK) ^ fnv1a64(query_id) ^ (session_index & _MASK)
    return _mix(x)


class SplitMix64:
    """Scalar SplitMix64 stream with a uniform [0, 1) helper."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def uniform(self) -> float:
        # 53 high bits, the usual double-precision mapping
        return (self.next_u64() >> 11) * 2.0**-53


def uniform_block(seeds: np.ndarray, n_draws: int) -> np.ndarray:
    """Uniform draws for many streams at once.

    Row i of the result equals the first ``n_draws`` values of
    ``SplitMix64(seeds[i]).uniform()``, bit for bit.
    """
    state = np.asarray(seeds, dtype=np.uint64).copy()
    out = np.empty((state.shape[0], n_draws), dtype=np.float64)
    gamma = np.uint64(_GAMMA)
    m1 = np.uint64(_MIX1)
    m2 = np.uint64(_MIX2)
    for j in range(n_draws):
        state += gamma
        z = state.copy()
        z = (z ^ (z >> np.uint64(30))) * m1
        z = (z ^ (z >> np.uint64(27))) * m2
        z = z ^ (z >> np.uint64(31))
        out[:, j] = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return out
