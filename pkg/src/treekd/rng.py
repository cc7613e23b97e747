"""xoshiro256** with splitmix64 seeding.

The generator is pinned (rather than numpy's) so forests, bootstrap samples
and per-record rule draws are reproducible independently of library versions.
Stream ``k`` under master seed ``s`` starts from ``s XOR ((k + 1) * φ64)``,
where φ64 is the 64-bit golden-ratio constant.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns ``(new_state, output)``."""
    state = (state + GOLDEN64) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def stream_seed(seed: int, index: int) -> int:
    return (seed ^ (((index + 1) * GOLDEN64) & MASK64)) & MASK64


class Xoshiro256:
    __slots__ = ("s",)

    def __init__(self, seed: int = 0) -> None:
        state = seed & MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self.s = words

    @classmethod
    def from_state(cls, words: list[int]) -> "Xoshiro256":
        rng = cls.__new__(cls)
        rng.s = [w & MASK64 for w in words]
        return rng

    @classmethod
    def stream(cls, seed: int, index: int) -> "Xoshiro256":
        return cls(stream_seed(seed, index))

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

    def randbelow(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))
