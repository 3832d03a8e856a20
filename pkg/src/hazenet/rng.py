"""Deterministic splitmix64 random stream.

Used everywhere randomness is needed (parameter init, scene generation,
batch sampling) so that runs are bit-reproducible across platforms for a
given seed, independent of numpy's global state.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def hash64(*values):
    """Mix integers into a single 64-bit value (for deriving per-item seeds)."""
    h = np.uint64(0x243F6A8885A308D3)
    with np.errstate(over="ignore"):
        for v in values:
            h = _mix(h ^ (np.uint64(v & 0xFFFFFFFFFFFFFFFF) + _GAMMA))
    return int(h)


class SplitMix64:
    """Counter-based splitmix64 stream; vectorized draws, no global state."""

    def __init__(self, seed):
        self.seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def _raw(self, n):
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix(self.seed + idx * _GAMMA)

    def next_u64(self):
        return int(self._raw(1)[0])

    def uniform(self, shape=(), low=0.0, high=1.0):
        """Uniform floats in [low, high) with 53-bit resolution."""
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        out = low + (high - low) * u
        return out.reshape(shape) if shape else float(out[0])

    def randint(self, n):
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]
