"""Deterministic portable random number generation.

Everything random in this package flows through splitmix64 so that runs are
reproducible bit-for-bit from a single integer seed, and so that a
reimplementation in another language can match the streams exactly. The full
recipe, normative for any port:

u64 stream
    splitmix64 (Vigna's reference constants). Output i (0-based) of a stream
    seeded with ``seed`` is ``mix(seed + (i+1) * 0x9E3779B97F4A7C15)`` where
    all arithmetic is mod 2^64 and ``mix`` is::

        z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
        z ^= z >> 27;  z *= 0x94D049BB133111EB
        z ^= z >> 31

uniforms
    ``u64 -> ((x >> 11) + 1) * 2^-53`` giving doubles in (0, 1]. Zero is
    unreachable by construction, so downstream logarithms never reject.
    Quantile transforms instead use ``((x >> 11) + 0.5) * 2^-53``, which is
    confined to the open interval (0, 1).

gaussians
    Box-Muller on consecutive uniform pairs (u1 = stream output 2k,
    u2 = output 2k+1)::

        r  = sqrt(-2 ln u1)
        z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2)

    Samples are emitted in the order z0_0, z1_0, z0_1, z1_1, ...; a request
    for an odd count draws a full final pair and discards its z1.

student_t
    Open-interval uniforms mapped through the Student-t quantile function
    (``scipy.special.stdtrit``). One uniform per sample, no rejection, so
    stream consumption is independent of the values drawn.
"""

from __future__ import annotations

import numpy as np
from scipy.special import stdtrit

__all__ = ["SplitMix64"]

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based splitmix64 stream.

    Block draws are vectorized but produce exactly the same outputs as
    repeated scalar calls, because output i depends only on seed and i.
    """

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & _MASK)
        self._drawn = 0

    def next_u64(self) -> int:
        return int(self.u64(1)[0])

    def u64(self, n: int) -> np.ndarray:
        """Next n raw outputs as uint64, advancing the stream."""
        if n < 0:
            raise ValueError(f"draw count must be >= 0, got {n}")
        idx = np.arange(self._drawn + 1, self._drawn + n + 1, dtype=np.uint64)
        self._drawn += n
        with np.errstate(over="ignore"):
            return _mix(self._seed + idx * np.uint64(_GOLDEN))

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in the half-open interval (0, 1]."""
        bits = self.u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) + 1.0) * 2.0**-53

    def uniform_open(self, n: int) -> np.ndarray:
        """n doubles strictly inside (0, 1), for quantile transforms."""
        bits = self.u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * 2.0**-53

    def gaussian(self, n: int) -> np.ndarray:
        """n standard normal doubles via Box-Muller."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def student_t(self, n: int, dof: float) -> np.ndarray:
        """n Student-t doubles with ``dof`` degrees of freedom (dof > 0)."""
        if dof <= 0:
            raise ValueError(f"degrees of freedom must be > 0, got {dof}")
        return stdtrit(dof, self.uniform_open(n))
