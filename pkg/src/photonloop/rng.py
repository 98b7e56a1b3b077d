"""Counter-seeded PCG32 stream, mirrored exactly by the compiled kernel.

Each trajectory id maps to an independent (state, increment) pair through two
splitmix64 evaluations of the master seed, so any trajectory's stream can be
reproduced in isolation — ensemble results do not depend on how trajectories
are sliced into blocks or scheduled across threads.
"""

from __future__ import annotations

GOLDEN = 0x9E3779B97F4A7C15
_M64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


class Pcg32:
    """PCG32 (XSH-RR) generator; uniform() matches the kernel bit for bit."""

    __slots__ = ("state", "inc")

    def __init__(self, master_seed: int, stream_id: int):
        m = master_seed & _M64
        k = stream_id & _M64
        self.state = splitmix64((m + (2 * k + 1) * GOLDEN) & _M64)
        self.inc = splitmix64((m + (2 * k + 2) * GOLDEN) & _M64) | 1
        self.next_u32()
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * 6364136223846793005 + self.inc) & _M64
        xorshifted = ((old >> 18) ^ old) >> 27 & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((32 - rot) & 31))) & 0xFFFFFFFF

    def uniform(self) -> float:
        """53-bit uniform in [0, 1) from two consecutive 32-bit outputs."""
        a = self.next_u32() >> 5
        b = self.next_u32() >> 6
        return (a * (1 << 26) + b) * (1.0 / 9007199254740992.0)
