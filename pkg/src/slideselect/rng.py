"""Deterministic PRNG: xoshiro256** seeded through splitmix64.

Implemented explicitly (rather than via numpy's generators) so that runs
reproduce bit-exactly across implementations of the same file formats.
Algorithms follow the public-domain reference by Blackman and Vigna;
fixed test vectors live in tests/test_rng.py.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


def splitmix64_next(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns (output, next_state)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """64-bit generator; state derived from a single seed via splitmix64."""

    def __init__(self, seed: int):
        seed &= MASK64
        state = seed
        self.s = []
        for _ in range(4):
            out, state = splitmix64_next(state)
            self.s.append(out)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the top bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        nbits = (n - 1).bit_length() or 1
        while True:
            r = self.next_u64() >> (64 - nbits)
            if r < n:
                return r

    def normal(self) -> float:
        """Standard normal via Box-Muller (one value per call, cached pair)."""
        import math

        if getattr(self, "_spare", None) is not None:
            v = self._spare
            self._spare = None
            return v
        while True:
            u1 = self.uniform()
            if u1 > 0.0:
                break
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, seq: list) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]


def fnv1a64(text: str) -> int:
    """Stable string hash used to derive per-slide seed streams."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def stream_for(seed: int, name: str = "") -> Xoshiro256StarStar:
    """Independent generator for (seed, name); stable across runs."""
    mixed = (seed & MASK64) ^ fnv1a64(name) if name else seed & MASK64
    out, _ = splitmix64_next(mixed)
    return Xoshiro256StarStar(out)
