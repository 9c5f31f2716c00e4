"""
Seeded pseudo-random generator

SplitMix64, specified bit-exactly so a seed reproduces the same stream on
every platform:

    state <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z <- state
    z <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9  mod 2^64
    z <- (z XOR (z >> 27)) * 0x94D049BB133111EB  mod 2^64
    output z XOR (z >> 31)

Uniform reals use the top 53 bits: u = (z >> 11) * 2^-53 in [0, 1).
Normals use Box-Muller on consecutive pairs (u1, u2), u1 drawn first:
    n = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
so every normal consumes exactly two outputs.

Because the state advances by a constant, draw i of a block is
mix(state + (i + 1) * gamma); blocks are generated vectorised and are
bit-identical to drawing one value at a time.
"""

import math
import zlib
from typing import Tuple

import numpy as np

from src.utils.errors import ArgumentError

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
TWO_POW_53 = float(1 << 53)


def mix64(z: int) -> int:
    """Scalar SplitMix64 finaliser"""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """
    Deterministic SplitMix64 stream.

    Not thread-safe: each training run, dataset build or dropout layer owns
    its own instance (see `fork`).
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self, count: int) -> np.ndarray:
        """Next `count` raw 64-bit outputs as a uint64 array"""
        if count < 0:
            raise ArgumentError(f"count must be >= 0, got {count}")
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(GAMMA)
        self.state = (self.state + count * GAMMA) & MASK64
        return _mix64_array(states)

    def uniforms(self, count: int) -> np.ndarray:
        """`count` doubles in [0, 1)"""
        bits = self.next_u64(count) >> np.uint64(11)
        return bits.astype(np.float64) / TWO_POW_53

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        if not lo < hi:
            raise ArgumentError(f"uniform needs lo < hi, got lo={lo}, hi={hi}")
        return float(lo + (hi - lo) * self.uniforms(1)[0])

    def uniform_array(self, lo: float, hi: float, shape: Tuple[int, ...]) -> np.ndarray:
        if not lo < hi:
            raise ArgumentError(f"uniform needs lo < hi, got lo={lo}, hi={hi}")
        count = int(np.prod(shape, dtype=np.int64))
        return (lo + (hi - lo) * self.uniforms(count)).reshape(shape)

    def normals(self, count: int) -> np.ndarray:
        u = self.uniforms(2 * count)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def normal(self) -> float:
        return float(self.normals(1)[0])

    def normal_array(self, shape: Tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        return self.normals(count).reshape(shape)

    def integers(self, high: int, count: int) -> np.ndarray:
        """`count` integers in [0, high) via floor(u * high)"""
        if high < 1:
            raise ArgumentError(f"integers needs high >= 1, got {high}")
        values = np.floor(self.uniforms(count) * high).astype(np.int64)
        return np.minimum(values, high - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Random ordering of range(n): stable argsort of n uniform keys"""
        return np.argsort(self.uniforms(n), kind="stable")

    def fork(self, label: str) -> "Rng":
        """
        Independent child stream keyed by a label.

        Uses crc32 of the label, so the derivation is stable across
        processes (unlike hash()). The parent state is left untouched.
        """
        salt = zlib.crc32(label.encode("utf-8"))
        return Rng(mix64(self.state ^ mix64(salt + GAMMA)))

    def __repr__(self) -> str:
        return f"Rng(state=0x{self.state:016x})"
